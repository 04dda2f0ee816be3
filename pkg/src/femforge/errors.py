class ConfigError(ValueError):
    """Invalid or incomplete simulation configuration.

    ``path`` names the offending entry, e.g. ``materials.heat.rho``.
    """

    def __init__(self, message, path=None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
