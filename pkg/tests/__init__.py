"""Tests for fairbarycenter."""
