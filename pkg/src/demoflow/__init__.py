"""demoflow: turn recorded browser demonstrations into editable DAG workflows."""

__version__ = "0.1.0"
