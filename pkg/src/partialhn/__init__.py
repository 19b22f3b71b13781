"""Partial hypernetworks for continual learning."""
