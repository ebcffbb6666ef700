import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from fusion.attributes import AttributeCatalog, attribute_evidence
from fusion.classification import (
    ClassBank,
    ClassDefinition,
    ClassPosterior,
    DeclarationReport,
    SensorReport,
    associate_single_target,
    classify_reports,
)
from fusion.evidence import parse_mass_text
from fusion.exceptions import FusionError, InvalidInputError, ReportSchemaError
from fusion.measurement import ESM_FIELDS, EsmSignalReport
from fusion.tracking import STATE_DIM, VELOCITY_INDEX, GaussianEstimate

from .reports import DeclarationRow, ReportRow

logger = logging.getLogger("fusion_center")

# Position and acceleration are not reported on track rows; they get a wide, uninformative variance.
UNREPORTED_VARIANCE = 1e6


class FusionCenter:
    """Fusion node for a single target: decodes report rows and runs the classifier step by step"""

    def __init__(
        self,
        classes: Sequence[ClassDefinition],
        catalog: Optional[AttributeCatalog] = None,
        prior: Optional[ClassPosterior] = None,
    ):
        self.bank = ClassBank(classes)
        self.catalog = catalog
        self.posterior = prior or ClassPosterior.uniform(self.bank.class_ids)

    def decode(self, row: ReportRow) -> SensorReport:
        """Turn one validated CSV row into a sensor report"""
        try:
            if row.report_type == "signal":
                payload = self._signal(row.fields)
            elif row.report_type == "attribute":
                payload = self._attribute(row.fields)
            elif row.report_type == "declaration":
                payload = self._declaration(row.sensor_id, row.fields)
            else:
                payload = self._track(row.fields)
        except FusionError as e:
            raise ReportSchemaError(str(e), row.row) from None
        return SensorReport(row.sensor_id, row.step, payload, timestamp=float(row.step))

    def _signal(self, fields: Dict[str, str]) -> EsmSignalReport:
        values = {name: float(fields.get(name, 0.0)) for name in ESM_FIELDS}
        return EsmSignalReport(**values)

    def _attribute(self, fields: Dict[str, str]):
        if self.catalog is None:
            raise InvalidInputError("attribute reports need an attributes catalog in the configuration")
        values = {k: float(v) for k, v in fields.items()}
        signal = {name: values.pop(name, 0.0) for name in ESM_FIELDS}
        y = EsmSignalReport(**signal, derived=values)
        return attribute_evidence(y, self.catalog)

    def _declaration(self, sensor_id: str, fields: Dict[str, str]) -> DeclarationReport:
        rho = float(fields.get("rho", 1.0))
        if "p" in fields:
            try:
                probabilities = np.array([float(p) for p in fields["p"].split("|")])
            except ValueError:
                raise InvalidInputError(f"declaration probabilities '{fields['p']}' are not numbers") from None
            if probabilities.size != len(self.bank):
                raise InvalidInputError(f"declaration has {probabilities.size} probabilities for {len(self.bank)} classes")
            return DeclarationReport(sensor_id, probabilities=probabilities, reliability=rho)

        frame = fields.get("frame")
        elements = frame.split("|") if frame else [str(c) for c in self.bank.class_ids]
        lines = [f"frame: {', '.join(elements)}"]
        for item in fields["mass"].split("|"):
            focal, sep, value = item.rpartition(":")
            if not sep:
                raise InvalidInputError(f"mass item '{item}' is not {{elements}}:value")
            lines.append(f"{focal} {value}")
        mass = parse_mass_text("\n".join(lines), source=f"declaration from {sensor_id}")
        mass = mass.on_frame(self.bank.frame)
        return DeclarationReport(sensor_id, mass=mass, reliability=rho)

    def _track(self, fields: Dict[str, str]) -> GaussianEstimate:
        state = np.zeros(STATE_DIM)
        vel = list(VELOCITY_INDEX)
        state[vel] = [float(fields["vx"]), float(fields["vy"])]
        covariance = np.eye(STATE_DIM) * UNREPORTED_VARIANCE
        pvxy = float(fields.get("pvxy", 0.0))
        covariance[np.ix_(vel, vel)] = [[float(fields["pvx"]), pvxy], [pvxy, float(fields["pvy"])]]
        return GaussianEstimate(state, covariance)

    def process(self, rows: Sequence[ReportRow]) -> List[DeclarationRow]:
        """Classify every step of a report stream, in step order"""
        # Step 1: Decode rows into sensor reports
        reports = [self.decode(row) for row in rows]
        rows_by_sensor_step = {(row.sensor_id, row.step): row.row for row in rows}

        # Step 2: Associate everything to the single target
        try:
            report_sets = associate_single_target(reports)
        except InvalidInputError as e:
            duplicate = self._first_duplicate(rows)
            raise ReportSchemaError(str(e), rows_by_sensor_step.get(duplicate, 0)) from None
        logger.info(f"Associated {len(reports)} reports into {len(report_sets)} steps")

        # Step 3: Fuse each step into a declaration
        declarations = []
        for report_set in report_sets:
            declaration = classify_reports(report_set, self.bank, self.posterior, self.catalog)
            self.posterior = ClassPosterior(declaration.probabilities, self.posterior.step_index + 1, self.bank.class_ids)
            declarations.append(
                DeclarationRow(report_set.step, declaration.probabilities, self.posterior.declared_class, declaration.reliability)
            )
            logger.debug(f"Step {report_set.step}: declared class {self.posterior.declared_class}")
        return declarations

    @staticmethod
    def _first_duplicate(rows: Sequence[ReportRow]):
        seen = set()
        for row in rows:
            key = (row.sensor_id, row.step)
            if key in seen:
                return key
            seen.add(key)
        return None
