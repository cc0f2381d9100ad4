import logging
import os

log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
logging.basicConfig(level=os.environ.get("CDC_LOG_LEVEL", "INFO").upper(), format=log_format)
logger = logging.getLogger("python_cdc_decoupling")
