from typing import Any, Callable, Mapping, Tuple, TypedDict

# One argparse argument: option strings and add_argument keyword arguments.
FlagSpec = Tuple[Tuple[str, ...], dict[str, Any]]


class Action(TypedDict):
    action: Callable[[Mapping[str, Any]], int]
    help: str
    flags: list[FlagSpec]


CommandActionType = dict[str, Action]
