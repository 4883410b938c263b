"""GraphNet: sparse graph-structured penalised regression and classification."""
