import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from censored_glm.services.data_model import (
    ColumnSchema,
    Dataset,
    ObservedRecord,
    load_csv,
    validate_dataset,
    write_csv,
)
from censored_glm.services.exceptions import DataParseError, EmptyDatasetError, SchemaError


class CsvFileMixin:
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, name: str, text: str) -> Path:
        path = Path(self.tmp.name) / name
        path.write_text(text, encoding="utf-8")
        return path


class ColumnSchemaTest(SimpleTestCase):
    def test_from_mapping(self):
        schema = ColumnSchema.from_mapping(
            {"v": "ldl", "delta": "observed", "y": "onset", "z": ["sex", "smoker"]}
        )
        self.assertEqual(schema.columns, ("ldl", "observed", "sex", "smoker", "onset"))
        self.assertEqual(schema.h_extra, ())

    def test_unknown_role_rejected(self):
        with self.assertRaises(SchemaError) as ctx:
            ColumnSchema.from_mapping({"v": "v", "delta": "d", "y": "y", "weights": "w"})
        self.assertIn("weights", ctx.exception.fields)

    def test_missing_required_role(self):
        with self.assertRaises(SchemaError) as ctx:
            ColumnSchema.from_mapping({"v": "v", "delta": "d"})
        self.assertIn("y", ctx.exception.fields)

    def test_column_used_twice(self):
        with self.assertRaises(SchemaError):
            ColumnSchema(v="a", delta="d", y="a")

    def test_interaction_must_name_a_z_column(self):
        with self.assertRaises(SchemaError):
            ColumnSchema(z=("z1",), interactions=("z2",))

    def test_from_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "schema.json"
            path.write_text(json.dumps({"v": "x", "delta": "d", "y": "y", "z": "z1"}))
            schema = ColumnSchema.from_json(path)
        self.assertEqual(schema.z, ("z1",))


class ObservedRecordTest(SimpleTestCase):
    def test_delta_star_complements_delta(self):
        self.assertEqual(ObservedRecord(v=1.0, delta=1, z=(), y=0.0).delta_star, 0)
        self.assertEqual(ObservedRecord(v=1.0, delta=0, z=(), y=0.0).delta_star, 1)

    def test_invalid_delta(self):
        with self.assertRaises(DataParseError):
            ObservedRecord(v=1.0, delta=2, z=(), y=0.0)

    def test_non_finite_value(self):
        with self.assertRaises(DataParseError):
            ObservedRecord(v=float("inf"), delta=1, z=(), y=0.0)


class LoadCsvTest(CsvFileMixin, SimpleTestCase):
    schema = ColumnSchema(z=("z1",))

    def test_well_formed_file(self):
        path = self.write("d.csv", "v,delta,z1,y\n1.5,1,0,2.0\n2.5,0,1,3.0\n1e-1,1,1,-4.5\n")
        dataset = load_csv(path, self.schema)
        self.assertEqual((dataset.n, dataset.p, dataset.q), (3, 1, 0))
        np.testing.assert_array_equal(dataset.v, [1.5, 2.5, 0.1])
        np.testing.assert_array_equal(dataset.delta + dataset.delta_star, [1, 1, 1])

    def test_bad_delta_names_the_row(self):
        path = self.write("d.csv", "v,delta,z1,y\n1,1,0,2\n2,2,1,3\n")
        with self.assertRaises(DataParseError) as ctx:
            load_csv(path, self.schema)
        self.assertEqual(ctx.exception.row, 2)
        self.assertIn("row 2", str(ctx.exception))

    def test_empty_cell_rejected(self):
        path = self.write("d.csv", "v,delta,z1,y\n1,1,,2\n")
        with self.assertRaises(DataParseError) as ctx:
            load_csv(path, self.schema)
        self.assertIn("z1", str(ctx.exception))

    def test_non_numeric_cell_rejected(self):
        path = self.write("d.csv", "v,delta,z1,y\n1,1,abc,2\n")
        with self.assertRaises(DataParseError):
            load_csv(path, self.schema)

    def test_missing_column_is_schema_error(self):
        path = self.write("d.csv", "v,delta,y\n1,1,2\n")
        with self.assertRaises(SchemaError) as ctx:
            load_csv(path, self.schema)
        self.assertIn("z1", ctx.exception.fields)

    def test_header_only_file(self):
        path = self.write("d.csv", "v,delta,z1,y\n")
        with self.assertRaises(EmptyDatasetError):
            load_csv(path, self.schema)

    def test_empty_file(self):
        path = self.write("d.csv", "")
        with self.assertRaises(EmptyDatasetError):
            load_csv(path, self.schema)

    def test_real_data_shape(self):
        rng = np.random.default_rng(886)
        n = 886
        delta = np.zeros(n, dtype=int)
        delta[rng.choice(n, 292, replace=False)] = 1
        lines = ["v,delta,female,smoker,y"]
        for i in range(n):
            lines.append(
                f"{rng.uniform(0.5, 3)},{delta[i]},{rng.integers(2)},{rng.integers(2)},{rng.normal(50, 10)}"
            )
        path = self.write("real.csv", "\n".join(lines) + "\n")
        dataset = load_csv(path, ColumnSchema(z=("female", "smoker")))
        self.assertEqual((dataset.n, dataset.p), (886, 2))
        self.assertEqual(int(dataset.complete_cases.sum()), 292)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        dataset = Dataset.from_arrays(
            v=rng.exponential(size=25),
            delta=rng.integers(0, 2, size=25),
            y=rng.normal(size=25),
            z=rng.normal(size=(25, 2)),
            h_extra=rng.normal(size=(25, 1)),
        )
        path = write_csv(dataset, Path(self.tmp.name) / "out.csv")
        loaded = load_csv(path, ColumnSchema.default(2, 1))
        self.assertEqual(loaded.records, dataset.records)


class DatasetTest(SimpleTestCase):
    def setUp(self):
        self.dataset = Dataset.from_arrays(
            v=[1.0, 2.0, 3.0, 4.0],
            delta=[1, 0, 1, 1],
            y=[0.5, 1.5, 2.5, 3.5],
            z=[[0, 1], [1, 0], [1, 1], [0, 0]],
            h_extra=[[10], [20], [30], [40]],
            interactions=(0,),
        )

    def test_design_columns(self):
        design = self.dataset.design()
        self.assertEqual(design.shape, (4, 5))
        np.testing.assert_array_equal(design[:, 0], 1)
        np.testing.assert_array_equal(design[:, 1], self.dataset.v)
        np.testing.assert_array_equal(design[:, 4], self.dataset.v * self.dataset.z[:, 0])
        self.assertEqual(self.dataset.design_names, ["(Intercept)", "v", "z1", "z2", "v:z1"])

    def test_h_has_z_as_prefix(self):
        np.testing.assert_array_equal(self.dataset.h[:, :2], self.dataset.z)
        np.testing.assert_array_equal(self.dataset.h[:, 2], [10, 20, 30, 40])

    def test_selection_covariates(self):
        with_outcome = self.dataset.selection_covariates(include_outcome=True)
        np.testing.assert_array_equal(with_outcome[:, 0], self.dataset.y)
        self.assertEqual(self.dataset.selection_covariates(include_outcome=False).shape, (4, 3))

    def test_with_latent_x(self):
        full = self.dataset.with_latent_x([1.0, 2.5, 3.0, 4.0])
        self.assertEqual(full.n_censored, 0)
        np.testing.assert_array_equal(full.v, [1.0, 2.5, 3.0, 4.0])
        self.assertEqual(full.interactions, (0,))

    def test_counts(self):
        self.assertEqual(self.dataset.n_censored, 1)
        self.assertEqual(self.dataset.censoring_fraction, 0.25)
        self.assertEqual(self.dataset.n_parameters, 5)


class ValidateDatasetTest(SimpleTestCase):
    def test_no_censoring(self):
        dataset = Dataset.from_arrays(v=[1, 2, 3], delta=[1, 1, 1], y=[1, 2, 4])
        report = validate_dataset(dataset)
        self.assertEqual(report.censoring_fraction, 0)
        self.assertTrue(report.ok)

    def test_all_censored(self):
        dataset = Dataset.from_arrays(v=[1, 2, 3], delta=[0, 0, 0], y=[1, 2, 4])
        report = validate_dataset(dataset)
        self.assertIn("no complete cases; all fits impossible", report.flags)

    def test_z_equal_to_intercept(self):
        dataset = Dataset.from_arrays(
            v=[1, 2, 3, 4], delta=[1, 1, 1, 1], y=[1, 2, 4, 3], z=[[1], [1], [1], [1]]
        )
        report = validate_dataset(dataset)
        self.assertEqual(report.design_rank, 2)
        self.assertTrue(any(flag.startswith("rank-deficient") for flag in report.flags))
