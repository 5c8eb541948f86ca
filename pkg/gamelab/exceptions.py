class GameLabError(Exception):
    """
    Base class for errors raised by the lab
    """


class DimensionMismatch(GameLabError):
    pass


class InfeasibleTransition(GameLabError):
    pass


class StateSpaceTooLarge(GameLabError):
    pass


class NonConvergence(GameLabError):
    pass


class NotSeparable(GameLabError):
    def __init__(self, player, context_a, context_b):
        self.player = player
        self.context_a = context_a
        self.context_b = context_b
        super().__init__(
            "utility of player {} depends on the others: opponent contexts {} and {} "
            "give different payoffs".format(player, context_a, context_b))


class ImprovementPathExceeded(GameLabError):
    pass


class SingularCovariance(GameLabError):
    pass


class EmptyLog(GameLabError):
    pass


class DegenerateLikelihood(GameLabError):
    pass


class RootUnreachable(GameLabError):
    pass


class ConfigError(GameLabError):
    pass
