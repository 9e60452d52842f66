# Keeps the repository root on sys.path so `import tamis` works under pytest.
