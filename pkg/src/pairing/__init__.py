"""Synthetic scenes, the parametric MOS oracle and imperfectly-paired triplets."""
