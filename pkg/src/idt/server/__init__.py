from .app import ApiSession, create_app, load_api_session

__all__ = ["ApiSession", "create_app", "load_api_session"]
