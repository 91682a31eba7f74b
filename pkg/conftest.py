pytest_plugins = ["mixplda.tests.fixtures"]
