"""Tests for rigstable."""
