from pathlib import Path

import numpy as np

from app.cli.deps import get_external
from app.core import artifacts
from app.models.run_config import RunConfig
from app.physics.external_field import scaling_report
from app.physics.potential import check_existence_hypotheses, lipschitz_sample


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    spec = config.potential.spec()
    report = check_existence_hypotheses(spec, config.profile.omega)
    payload = {"hypotheses": report, "lipschitz": lipschitz_sample(spec)}
    external = get_external(config)
    if external is not None:
        box = np.stack(np.meshgrid(*(np.linspace(-4.0, 4.0, 9),) * 3, indexing="ij"))
        deltas = [external.delta * 2.0**-i for i in range(3)]
        payload["scaling"] = scaling_report(external, deltas, box)
    artifacts.write_json(out_dir / "hypotheses.json", payload)
    return {"existence_ok": report.existence_ok}


def register(subparsers, parents):
    parser = subparsers.add_parser(
        "check-hypotheses", parents=parents, help="certify the existence hypotheses for the configured potential"
    )
    parser.set_defaults(handler=handle)
