import logging
from pathlib import Path
from typing import Optional, Union

from fwcomp.config import config
from fwcomp.errors import TableIoError, TableParseError
from fwcomp.model.intervals import AddressSet, parse_cidr

logger = logging.getLogger(__name__)


def resolve_table_path(path: Union[str, Path], source_path: Optional[Path] = None) -> Path:
    """Absolute location of a table file.

    Relative paths are looked up in the configured table directory
    (FWCOMP_TABLE_DIR wins), then next to the .fwb file, then in the
    current working directory.
    """
    path = Path(path)
    if path.is_absolute():
        return path
    if config.table_dir is not None:
        return config.table_dir / path
    if source_path is not None:
        return Path(source_path).parent / path
    return Path.cwd() / path


def load_address_table(path: Union[str, Path]) -> AddressSet:
    """Union of every address or CIDR block listed in a table file.

    One entry per line; `#` starts a comment, blank lines are ignored.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise TableIoError(f"Cannot read address table {path}: {e}") from e

    blocks = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            block = parse_cidr(line)
        except ValueError as e:
            raise TableParseError(str(e), number, str(path)) from e
        blocks.append((block.first, block.last))
    result = AddressSet(blocks)
    logger.debug(f"{path}: {len(blocks)} entries, {len(result)} intervals")
    return result
