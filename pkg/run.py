#!/usr/bin/env python3
"""
Main entry point for the criticality lab.
Loads the local .env file and hands the command line to src.main.
"""

import sys

from dotenv import load_dotenv


def main():
    """Main function to run the experiment runner"""

    # Load environment variables
    load_dotenv()

    from src.main import main as run_cli

    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
