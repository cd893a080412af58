from enum import Enum


class MovementClass(str, Enum):
    """The four sleep movement categories; the order fixes the class index."""
    BODY_TURN = "body_turn"
    SITTING_UP = "sitting_up"
    ARM_MOVE = "arm_move"
    LEG_MOVE = "leg_move"

    @property
    def index(self) -> int:
        return list(MovementClass).index(self)

    @classmethod
    def from_index(cls, index: int) -> "MovementClass":
        return list(cls)[index]


CLASS_COUNT = len(MovementClass)
