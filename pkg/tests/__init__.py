"""Tests for mortar-schwarz."""
