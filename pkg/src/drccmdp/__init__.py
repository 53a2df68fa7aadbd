"""KL distributionally robust chance-constrained MDPs."""
