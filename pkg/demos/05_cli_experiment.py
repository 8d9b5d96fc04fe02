"""
Running an experiment from a spec
=================================

The command line tool reads a JSON spec, writes CSV and JSON reports and,
on request, SVG charts.  The same run is shown here from Python.
"""

import json
import tempfile

from slgbm.cli import main

with tempfile.TemporaryDirectory() as out:
    spec = {"schema_version": 1, "command": "moments", "n": 3, "p": 3, "tau": [0, 1, 2, 5],
            "out": out, "format": "both", "plots": True}
    path = f"{out}/spec.json"
    with open(path, "w") as fh:
        json.dump(spec, fh)
    status = main(["moments", "--spec", path])
    print("exit status", status)
