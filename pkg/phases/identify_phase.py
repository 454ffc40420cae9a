import json
import logging
from pathlib import Path

from utils.errors import ConfigError
from utils.identifiability import (
    catalog_graphs, check_all, parse_edge_list, verdict_records, verdict_table,
)


def load_graph(target):
    """Catalog name (fig3a/fig3b/fig3c) or path to an edge-list file."""
    catalog = catalog_graphs()
    if target.upper() in catalog:
        return target.upper(), catalog[target.upper()]
    path = Path(target)
    if not path.is_file():
        raise ConfigError(f"'{target}' is neither a catalog graph ({', '.join(sorted(catalog))}) nor a file")
    return path.stem, parse_edge_list(path.read_text(encoding="utf-8"))


def run_identify(target, measured=(), as_json=False):
    name, dag = load_graph(target)
    if measured:
        dag = dag.with_measured(*measured)
        logging.info(f"Treating {', '.join(measured)} as measured")
    verdicts = check_all(dag)
    if as_json:
        return json.dumps(verdict_records(dag, verdicts, name), indent=2)
    return f"{name}\n{verdict_table(dag, verdicts)}"
