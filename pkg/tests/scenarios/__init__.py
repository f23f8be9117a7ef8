# End-to-end scenario tests
