"""
Geolocal - command line

    python -m geolocal <command> [--flag value ...]

Flags come from each command's INPUT_TYPES. Resolution order is flags, then
the `--config` file, then res/default.json.
"""

import sys
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

from . import COMMAND_CLASS_MAPPINGS, SCHEMA_VERSION, __version__, \
    Lexicon, Session, configLoad, deep_merge
from .sup.util import GeoException, content_hash, report_dump

# ==============================================================================

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_USAGE = 2
EXIT_STAGE = 3

CLI_TYPES = {"INT": int, "FLOAT": float, "STRING": str}

def _flag(name: str) -> str:
    return '--' + name.replace('_', '-')

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geolocal", description=__doc__.strip().splitlines()[0])
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('--log-level', default=None,
                        choices=["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, cls in COMMAND_CLASS_MAPPINGS.items():
        desc = (cls.DESCRIPTION or name).strip()
        cmd = sub.add_parser(name, help=desc.split('.')[0], description=desc)
        for key, (typ, meta) in cls.INPUT_TYPES()["optional"].items():
            tip = Lexicon._tooltipsDB.get(key, "")
            default = meta.get("default")
            help_text = f"{tip} (default: {default!r})" if tip else None
            if typ == "BOOLEAN":
                cmd.add_argument(_flag(key), dest=key, action='store_true',
                                 default=argparse.SUPPRESS, help=tip or None)
            elif isinstance(typ, (list, tuple)):
                cmd.add_argument(_flag(key), dest=key, choices=list(typ),
                                 type=str.upper, default=argparse.SUPPRESS, help=help_text)
            else:
                cmd.add_argument(_flag(key), dest=key, type=CLI_TYPES.get(typ, str),
                                 default=argparse.SUPPRESS, help=help_text)
    return parser

def resolve_config(cls, flags: Dict[str, Any]) -> Dict[str, Any]:
    resolved = cls.defaults()
    if fname := flags.get(Lexicon.CONFIG):
        if not Path(fname).is_file():
            raise FileNotFoundError(f"config file {fname} not found")
        user = configLoad(Path(fname))
        if not isinstance(user, dict):
            raise ValueError(f"config file {fname} must hold a JSON object")
        section = user.get(cls.NAME)
        if section is None and not any(k in COMMAND_CLASS_MAPPINGS for k in user):
            section = user
        deep_merge(resolved, section or {})
    return deep_merge(resolved, flags)

def main(argv: Optional[List[str]]=None) -> int:
    Session()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    if args.log_level:
        logger.configure(handlers=[{"sink": sys.stderr, "level": args.log_level}])

    cls = COMMAND_CLASS_MAPPINGS[args.command]
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "log_level")}
    try:
        resolved = resolve_config(cls, flags)
        body, code = cls().run(**resolved)
    except (GeoException, ValueError, KeyError, OSError) as e:
        logger.error(f"{e} :: {cls.NAME}")
        return EXIT_USAGE

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": cls.NAME,
        "config": resolved,
        "content_hash": content_hash(resolved),
    }
    report.update({k: v for k, v in body.items() if k != "schema_version"})
    output = resolved.get(Lexicon.OUTPUT) or None
    report_dump(report, output)
    return code

if __name__ == "__main__":
    sys.exit(main())
