# Scenario package
