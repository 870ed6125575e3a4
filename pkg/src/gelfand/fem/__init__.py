"""P1 finite elements for the Gel'fand problem."""
