"""Tests for the cavity self-organization simulator."""
