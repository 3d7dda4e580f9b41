"""Service package: FastAPI app plus request/response schemas."""
