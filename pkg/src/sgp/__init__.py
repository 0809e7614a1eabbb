"""Toolkit for machine-actionable scholarly objects on the web.

Typed-link parsing and navigation, change feeds and dumps, registrar
metadata, bibliographic reconciliation, archival ingest, and compliance
auditing. See the README for the CLI surface.
"""

__version__ = "0.1.0"
