from .config import config, Config, Settings

__all__ = ['config', 'Config', 'Settings']
