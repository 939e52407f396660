"""Services: environment, value backends, planners, executor and experiments."""
