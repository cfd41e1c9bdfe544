"""Pipeline stages for the forex Twitter analysis."""
