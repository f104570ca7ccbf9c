import numpy as np
import pytest
from hypothesis import given

from findex.algebra import AlgebraShape, Element, random_element
from findex.inclusion import (Embedding, EmbeddingError, ProjectionError, center_of_sub,
                              max_orthogonal_family, minimal_projections, relative_commutant)
from strategies import embeddings, seeds


def test_unitality_error_names_the_block():
    with pytest.raises(EmbeddingError, match="A-block 1"):
        Embedding(AlgebraShape((1,)), AlgebraShape((2, 3)), np.array([[2], [2]]))


def test_inclusion_matrix_shape_and_injectivity():
    with pytest.raises(EmbeddingError):
        Embedding(AlgebraShape((1,)), AlgebraShape((2,)), np.array([[2, 0]]))
    with pytest.raises(EmbeddingError, match="not represented"):
        Embedding(AlgebraShape((1, 1)), AlgebraShape((2,)), np.array([[2, 0]]))


def test_non_unitary_rotation_rejected():
    with pytest.raises(EmbeddingError):
        Embedding(AlgebraShape((1,)), AlgebraShape((2,)), np.array([[2]]),
                  (np.array([[1.0, 1.0], [0.0, 1.0]]),))


@given(embeddings(), seeds)
def test_embedding_is_unital_star_homomorphism(e, seed):
    assert e.homomorphism_residual() < 1e-10
    rng = np.random.default_rng(seed)
    b = random_element(e.sub_shape, rng)
    assert e.restrict(e.embed(b)).allclose(b, 1e-10)
    assert e.range_residual(e.embed(b)) < 1e-10


@given(embeddings(), seeds)
def test_embed_and_restrict_matrices(e, seed):
    rng = np.random.default_rng(seed)
    b = random_element(e.sub_shape, rng)
    assert np.allclose(e.embed_matrix @ b.compact, e.embed(b).compact)
    x = e.embed(b)
    assert np.allclose(e.restrict_matrix @ x.compact, b.compact)


@given(embeddings())
def test_relative_commutant_dimension_is_sum_of_squared_multiplicities(e):
    rc = relative_commutant(e)
    assert rc.dim == int((e.lam ** 2).sum())
    for g in e.generators():
        for x in rc.vectors:
            assert (x @ g - g @ x).allclose(Element.zeros(e.amb_shape), 1e-9)


@given(embeddings())
def test_generators_generate_the_image(e):
    # commuting with the three generators is the same as commuting with every unit
    units = [e.embed(Element.matrix_unit(e.sub_shape, j, r, c))
             for j, m in enumerate(e.sub_shape.blocks) for r in range(m) for c in range(m)]
    for x in relative_commutant(e).vectors:
        for u in units:
            assert (x @ u - u @ x).allclose(Element.zeros(e.amb_shape), 1e-9)


@given(embeddings())
def test_minimal_projection_families(e):
    for j, p in enumerate(minimal_projections(e)):
        fam = max_orthogonal_family(e, p)
        # ι(e_00) has rank Λ_ij in A-block i
        assert fam.block_ranks == tuple(int(x) for x in e.lam[:, j])
        assert fam.size == int(e.lam[:, j].sum())
        assert fam.corner_dim == int((e.lam[:, j] ** 2).sum())


def test_non_minimal_projection_rejected():
    e = Embedding(AlgebraShape((2,)), AlgebraShape((4,)), np.array([[2]]))
    with pytest.raises(ProjectionError):
        max_orthogonal_family(e, Element.identity(e.amb_shape))
    with pytest.raises(ProjectionError):
        max_orthogonal_family(e, Element.matrix_unit(e.amb_shape, 0, 0, 0))


def test_center_of_sub_sums_to_one():
    e = Embedding(AlgebraShape((1, 2)), AlgebraShape((3, 2)), np.array([[1, 1], [0, 1]]))
    z = center_of_sub(e)
    assert len(z) == 2
    assert (z[0] + z[1]).allclose(Element.identity(e.amb_shape), 1e-12)


@given(embeddings())
def test_dict_round_trip(e):
    f = Embedding.from_dict(e.to_dict())
    assert np.array_equal(f.lam, e.lam)
    for u, v in zip(e.block_unitaries, f.block_unitaries):
        assert np.array_equal(u, v)
