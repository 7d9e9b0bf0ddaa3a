import numpy as np
import pytest

from catmaxent.estimators.define_model import enumerate_tuples
from catmaxent.shared import schemas
from catmaxent.shared.errors import ConstraintValidationError, EmptyInputError, SchemaMismatchError
from catmaxent.shared.schemas import Attribute, Pattern, PatternConstraint, Schema, TupleDataset


@pytest.fixture
def abc_schema():
    return Schema.from_dict({'A1': ['a', 'b'], 'A2': ['x', 'b'], 'A3': ['c', 'd']})


def test_indicator_match(abc_schema):
    row = abc_schema.encode_row(['a', 'b', 'c'])
    assert schemas.indicator(Pattern({0: 0}), row) == 1


def test_indicator_mismatch(abc_schema):
    row = abc_schema.encode_row(['a', 'b', 'c'])
    assert schemas.indicator(Pattern({0: 0, 1: 0}), row) == 0


def test_indicator_out_of_range():
    with pytest.raises(SchemaMismatchError):
        schemas.indicator(Pattern({5: 0}), (0, 1, 0))


def test_empty_pattern_rejected():
    with pytest.raises(ConstraintValidationError):
        Pattern({})


def test_indicator_is_product_of_equalities(binary_schema):
    tuples = enumerate_tuples(binary_schema)
    pattern = Pattern({0: 1, 2: 0})
    for row in tuples:
        expected = int(row[0] == 1) * int(row[2] == 0)
        assert schemas.indicator(pattern, row) == expected
    assert np.array_equal(schemas.pattern_mask(pattern, tuples), (tuples[:, 0] == 1) & (tuples[:, 2] == 0))


def test_empirical_frequency(binary_schema):
    dataset = TupleDataset(binary_schema, [[0, 0, 0], [0, 1, 0], [0, 1, 1], [1, 1, 1]])
    assert schemas.empirical_frequency(dataset, Pattern({0: 0})) == 0.75


def test_empirical_frequency_full_pattern(binary_schema):
    rows = [[1, 1, 1]] * 9 + [[0, 1, 0]]
    dataset = TupleDataset(binary_schema, rows)
    assert schemas.empirical_frequency(dataset, Pattern({0: 0, 1: 1, 2: 0})) == pytest.approx(0.1)


def test_empirical_frequency_never_matched(binary_schema):
    dataset = TupleDataset(binary_schema, [[1, 1, 1], [1, 0, 1]])
    assert schemas.empirical_frequency(dataset, Pattern({0: 0})) == 0.


def test_empirical_frequency_permutation_invariant(binary_schema):
    rng = np.random.default_rng(0)
    rows = rng.integers(0, 2, size=(50, 3))
    pattern = Pattern({1: 1, 2: 0})
    a = schemas.empirical_frequency(TupleDataset(binary_schema, rows), pattern)
    b = schemas.empirical_frequency(TupleDataset(binary_schema, rng.permutation(rows)), pattern)
    assert a == b


def test_empirical_frequency_empty(binary_schema):
    with pytest.raises(EmptyInputError):
        schemas.empirical_frequency(TupleDataset(binary_schema, np.zeros((0, 3))), Pattern({0: 0}))


def test_space_size_is_exact():
    schema = Schema([Attribute(f'A{n}', ['x', 'y', 'z']) for n in range(100)])
    assert schema.space_size == 3**100
    assert schema.log_space_size == pytest.approx(100 * np.log(3))


def test_schema_rejects_duplicates():
    with pytest.raises(SchemaMismatchError):
        Attribute('age', ['young', 'young'])
    with pytest.raises(SchemaMismatchError):
        Schema([Attribute('age', ['a', 'b']), Attribute('age', ['c', 'd'])])


def test_parse_pattern(census_schema):
    pattern = schemas.parse_pattern('sex=F, age=16-64', census_schema)
    assert pattern == Pattern({0: 0, 1: 1})
    assert pattern.describe(census_schema) == 'sex=F,age=16-64'


@pytest.mark.parametrize('expression', ['sex', 'sex=F,sex=M', 'sex=', '=F'])
def test_parse_pattern_malformed(census_schema, expression):
    with pytest.raises(ConstraintValidationError):
        schemas.parse_pattern(expression, census_schema)


def test_parse_pattern_unknown_label(census_schema):
    with pytest.raises(SchemaMismatchError):
        schemas.parse_pattern('sex=X', census_schema)
    with pytest.raises(SchemaMismatchError):
        schemas.parse_pattern('height=tall', census_schema)


def test_constraint_boundary():
    with pytest.raises(ConstraintValidationError):
        PatternConstraint(Pattern({0: 0}), 1.)
    with pytest.raises(ConstraintValidationError):
        PatternConstraint(Pattern({0: 0}), 1.2)
    clamped = PatternConstraint(Pattern({0: 0}), 0., clamp=True)
    assert clamped.target_prob == schemas.BOUNDARY_EPSILON


def test_validate_constraints_duplicate(binary_schema):
    constraints = [PatternConstraint(Pattern({0: 0, 1: 1}), 0.2), PatternConstraint(Pattern({1: 1, 0: 0}), 0.3)]
    with pytest.raises(ConstraintValidationError):
        schemas.validate_constraints(constraints, binary_schema)


def test_validate_constraints_out_of_schema(binary_schema):
    with pytest.raises(SchemaMismatchError):
        schemas.validate_constraints([PatternConstraint(Pattern({0: 2}), 0.2)], binary_schema)


def test_validate_marginals(census_schema):
    good = [np.array([0.5, 0.5]), np.array([0.2, 0.6, 0.2]), np.array([0.7, 0.3])]
    assert len(schemas.validate_marginals(good, census_schema)) == 3
    with pytest.raises(ConstraintValidationError):
        schemas.validate_marginals(good[:2], census_schema)
    with pytest.raises(ConstraintValidationError):
        schemas.validate_marginals([good[0], np.array([0.2, 0.6, 0.3]), good[2]], census_schema)


def test_clamp_marginals():
    clamped = schemas.clamp_marginals([np.array([0., 1.])])[0]
    assert np.all(clamped > 0)
    assert clamped.sum() == pytest.approx(1.)


def test_dataset_rejects_out_of_range(binary_schema):
    with pytest.raises(SchemaMismatchError):
        TupleDataset(binary_schema, [[0, 2, 0]])
    with pytest.raises(SchemaMismatchError):
        TupleDataset(binary_schema, [[0, 1]])


def test_dataset_to_dataframe(census_schema):
    dataset = TupleDataset(census_schema, [[1, 2, 0]])
    df = dataset.to_dataframe()
    assert list(df.columns) == ['sex', 'age', 'tenure']
    assert df.iloc[0].tolist() == ['M', '65+', 'own']
