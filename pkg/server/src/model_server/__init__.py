"""CNN scoring microservice and CAM exporter speaking the /v1 wire protocol."""

__version__ = "0.1.0"
