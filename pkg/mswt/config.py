import os

LOG_LEVEL = os.environ.get("MSWT_LOG_LEVEL", "INFO")
DATA_DIR = os.environ.get("MSWT_DATA_DIR", "data")
RUN_DIR = os.environ.get("MSWT_RUN_DIR", "runs")
