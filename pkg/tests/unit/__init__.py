# Unit tests for the reconstruction library
