from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, TypeVar, Union

from src.exceptions import AppBaseException

T = TypeVar("T")
Outcome = Tuple[Path, Union[T, AppBaseException]]


def run_per_file(
    paths: Sequence[Union[str, Path]],
    handler: Callable[[Path], T],
    workers: int,
    logger,
) -> List[Outcome]:
    """
    Runs 'handler' on every path in a thread pool of 'workers' threads.
    Results come back sorted by path; an application error in one file is
    returned in place of its result and does not stop the others.
    """
    ordered = sorted(Path(p) for p in paths)

    def guarded(path: Path):
        logger.debug(f"Processing {path}")
        try:
            return handler(path)
        except AppBaseException as e:
            logger.error(f"{path}: {e}")
            return e

    if workers <= 1 or len(ordered) <= 1:
        results = [guarded(p) for p in ordered]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(guarded, ordered))
    logger.info(f"Processed {len(ordered)} file(s) with {max(1, workers)} worker(s)")
    return list(zip(ordered, results))


def map_ordered(func: Callable[..., T], items: Sequence, workers: int) -> List[T]:
    """Apply 'func' to each item on a thread pool; results keep item order."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
