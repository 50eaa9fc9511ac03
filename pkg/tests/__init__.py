"""Tests for sjed."""
