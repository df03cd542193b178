class DeanonError(ValueError):
    """Raised for contract violations; ``code`` is a stable machine-readable tag."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)
