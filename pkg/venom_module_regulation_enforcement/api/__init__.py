"""HTTP surface for the Regulation Enforcement module."""
