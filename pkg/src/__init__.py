"""Criticality experiments for Schrodinger forms on finite chains and 1D/radial grids."""
