"""Multiple-output mixtures of linear experts with Gaussian gates."""
