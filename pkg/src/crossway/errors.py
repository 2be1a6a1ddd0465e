"""Exception types shared across the simulator."""


class CrosswayError(Exception):
    """Base class for all simulator errors."""


class OffMap(CrosswayError):
    """A coordinate could not be matched to the path within tolerance."""


class Unreachable(CrosswayError):
    """No successor chain connects origin and destination lanes."""


class AlreadyPassed(CrosswayError):
    """The queried conflict point lies behind the vehicle."""


class DegenerateGeometry(CrosswayError):
    """Two distinct movement paths overlap for their entire length."""


class StalledVehicle(CrosswayError):
    """ETA is undefined for a stopped vehicle with zero preferred acceleration."""


class NotHeld(CrosswayError):
    """Release requested for a slot the vehicle does not hold."""


class InactiveLink(CrosswayError):
    """Consensus control evaluated on a link with adjacency zero."""


class MissingEstimate(CrosswayError):
    """A control target has no trajectory estimate available."""


class ModeConflict(CrosswayError):
    """Engine force and brake torque commanded simultaneously."""


class HorizonExceeded(CrosswayError):
    """A trajectory estimate was queried beyond its prediction horizon."""


class FailSafe(CrosswayError):
    """A communication blackout exceeded the safety threshold."""


class BehindCamera(CrosswayError):
    """A point with non-positive camera-frame depth cannot be projected."""


class Crossed(CrosswayError):
    """The ego vehicle already passed the conflict point; slot box is void."""


class NoEgo(CrosswayError):
    """A driving input arrived but the scenario has no human-driven vehicle."""


class BadScenario(CrosswayError):
    """Scenario file violates the documented schema."""
