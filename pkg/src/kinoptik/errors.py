"""Exception types shared across the toolkit."""


class KinoptikError(Exception):
    """Base class for all toolkit errors."""


class UrdfError(KinoptikError):
    """Structural or validation problem in a robot description."""


class UnsupportedFeatureError(UrdfError):
    """Input uses a feature this toolkit deliberately does not implement."""


class CostEvaluationError(KinoptikError):
    """A cost evaluator produced non-finite values or broke its contract."""

    def __init__(self, cost_name: str, detail: str):
        super().__init__(f"cost '{cost_name}': {detail}")
        self.cost_name = cost_name


class PlanningError(KinoptikError):
    """A task-level driver could not set up a solvable problem."""
