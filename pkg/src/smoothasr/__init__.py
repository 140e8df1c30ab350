"""Randomized smoothing defenses, adaptive attacks and certification for a toy CTC recognizer."""
