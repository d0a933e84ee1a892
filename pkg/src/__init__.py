"""Gerador de fidelidades sintéticas com correlação controlada."""
