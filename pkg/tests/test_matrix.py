import numpy as np
import pytest
from rbacmine.errors import ShapeError
from rbacmine.matrix import BinaryMatrix, bool_mat_prod, hamming
from rbacmine.rbac import FlatRbacConfig, HierRbacConfig, collapse_hierarchy

def m(*rows: str) -> BinaryMatrix:
    return BinaryMatrix.from_rows(rows)

def loop_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]), dtype=bool)
    for i in range(a.shape[0]):
        for d in range(b.shape[1]):
            for k in range(a.shape[1]):
                if a[i, k] and b[k, d]:
                    out[i, d] = True
    return out

def test_construction() -> None:
    with pytest.raises(ShapeError, match='two-dimensional'):
        BinaryMatrix([1, 0, 1])
    with pytest.raises(ShapeError, match='nonempty'):
        BinaryMatrix(np.zeros((0, 3)))
    with pytest.raises(ValueError, match='exactly 0 or 1'):
        BinaryMatrix([[0, 2]])
    with pytest.raises(ShapeError, match='same length'):
        m('01', '1')

    a = m('0110', '1000')
    assert a.shape == (2, 4)
    assert a.size == 8
    assert a.count() == 3
    assert a[0, 1] == 1 and a[1, 1] == 0
    assert str(a) == '0110\n1000'
    assert a == BinaryMatrix(np.array([[0, 1, 1, 0], [1, 0, 0, 0]]))
    assert hash(a) == hash(m('0110', '1000'))
    assert a != m('0110', '1001')
    assert list(a) == [(0, 1, 1, 0), (1, 0, 0, 0)]
    assert eval(repr(a)) == a  # pylint: disable=eval-used

def test_immutable() -> None:
    source = np.array([[True, False]])
    a = BinaryMatrix(source)
    source[0, 1] = True
    assert a == m('10')
    with pytest.raises(ValueError):
        a.bits[0, 0] = False

def test_algebra() -> None:
    a = m('0110', '1000')
    assert ~a == m('1001', '0111')
    assert (a | ~a) == BinaryMatrix.ones(2, 4)
    assert (a & ~a) == BinaryMatrix.zeros(2, 4)
    assert a.T == m('01', '10', '10', '00')
    assert BinaryMatrix.identity(2) == m('10', '01')
    assert BinaryMatrix.one_hot([1, 0, 1]) == m('01', '10', '01')
    with pytest.raises(ShapeError, match='elementwise OR'):
        _ = a | m('01')

@pytest.mark.parametrize('z, u, x', [
    (('10', '01'), ('101', '011'), ('101', '011')),
    (('00', '00', '00'), ('1010', '0111'), ('0000', '0000', '0000')),
    (('11', '01'), ('10', '01'), ('11', '01')),
])
def test_bool_mat_prod(z: tuple[str, ...], u: tuple[str, ...], x: tuple[str, ...]) -> None:
    assert bool_mat_prod(m(*z), m(*u)) == m(*x)
    assert m(*z) @ m(*u) == m(*x)

def test_bool_mat_prod_random() -> None:
    rng = np.random.default_rng(5)
    for _ in range(20):
        n, k, d = rng.integers(1, 6, size=3)
        a = BinaryMatrix(rng.random((n, k)) < 0.4)
        b = BinaryMatrix(rng.random((k, d)) < 0.4)
        assert np.array_equal((a @ b).bits, loop_product(a.bits, b.bits))

def test_bool_mat_prod_shapes() -> None:
    with pytest.raises(ShapeError, match=r'\(2, 3\) and \(2, 3\)'):
        bool_mat_prod(BinaryMatrix.ones(2, 3), BinaryMatrix.ones(2, 3))

def test_hamming() -> None:
    a = m('011', '100')
    assert hamming(a, a) == 0
    assert hamming(a, ~a) == 6
    with pytest.raises(ShapeError):
        hamming(a, a.T)

    rng = np.random.default_rng(11)
    for _ in range(10):
        a = BinaryMatrix.random(4, 4, seed=rng)
        b = BinaryMatrix.random(4, 4, seed=rng)
        expected = sum(a[i, j] != b[i, j] for i in range(4) for j in range(4))
        assert hamming(a, b) == expected

def test_collapse_hierarchy() -> None:
    y = m('1100', '0011')
    assert collapse_hierarchy(BinaryMatrix.identity(2), y) == y

    # one technical role per permission: columns of v, permuted
    v = m('101', '011')
    y = m('010', '001', '100')
    u = collapse_hierarchy(v, y)
    assert u == BinaryMatrix(v.bits[:, [2, 0, 1]])

    rng = np.random.default_rng(3)
    for _ in range(20):
        z = BinaryMatrix.random(4, 3, seed=rng)
        v = BinaryMatrix.random(3, 2, seed=rng)
        y = BinaryMatrix.random(2, 4, seed=rng)
        u = collapse_hierarchy(v, y)
        assert np.array_equal(u.bits, loop_product(v.bits, y.bits))
        assert z @ u == (z @ v) @ y
        assert HierRbacConfig(z, v, y).flatten().reconstruct() == HierRbacConfig(z, v, y).reconstruct()

def test_configs() -> None:
    with pytest.raises(ShapeError, match='flat RBAC'):
        FlatRbacConfig(BinaryMatrix.ones(3, 2), BinaryMatrix.ones(3, 4))
    with pytest.raises(ShapeError, match='two-level'):
        HierRbacConfig(BinaryMatrix.ones(3, 2), BinaryMatrix.ones(2, 2), BinaryMatrix.ones(3, 4))

    config = FlatRbacConfig(m('11', '01', '00'), m('1100', '0110'))
    assert config.num_users == 3 and config.num_roles == 2 and config.num_permissions == 4
    assert config.role_sets() == ((0, 1), (1,), ())
    assert config.reconstruct() == m('1110', '0110', '0000')

    hier = HierRbacConfig(BinaryMatrix.one_hot([0, 1, 0]), m('10', '11'), m('110', '001'))
    assert hier.is_disjoint
    assert hier.num_business_roles == 2 and hier.num_technical_roles == 2
    assert hier.reconstruct() == m('110', '111', '110')
    assert not HierRbacConfig(m('11', '01'), m('10', '11'), m('110', '001')).is_disjoint
