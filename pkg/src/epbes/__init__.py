"""Membership solving for existential parameterised Boolean equation systems."""
