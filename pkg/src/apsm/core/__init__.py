"""Parties, the consent calculus and party lifecycle."""
