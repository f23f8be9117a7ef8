# Slow acceptance runs (pytest -m slow tests/acceptance)
