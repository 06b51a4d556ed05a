import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igae import tensor as T
from igae.autoencoder import Autoencoder, AutoencoderSpec, decode, encode
from igae.gradcheck import check_gradients
from igae.tensor import Rng, Tensor


@pytest.fixture(scope="module")
def small_ae():
    return Autoencoder.create(AutoencoderSpec(l=4, c=8, channels=(8, 16)), Rng(0))


def test_latent_shape_contract():
    ae = Autoencoder.create(AutoencoderSpec(l=8, c=16, channels=(8, 8, 8)), Rng(0))
    with T.no_grad():
        z = encode(ae, np.random.default_rng(0).uniform(size=(128, 128, 3)))
    assert z.shape == (16, 16, 16)


def test_desk_shape_contract(small_ae):
    with T.no_grad():
        z = encode(small_ae, np.random.default_rng(1).uniform(size=(64, 64, 3)))
        x = decode(small_ae, z)
    assert z.shape == (16, 16, 8)
    assert x.shape == (64, 64, 3)


def test_encode_deterministic(small_ae):
    x = np.random.default_rng(2).uniform(size=(1, 3, 32, 32)).astype(np.float32)
    assert small_ae.encode(x).data.tobytes() == small_ae.encode(x).data.tobytes()


def test_indivisible_extent_names_dimensions(small_ae):
    with pytest.raises(ValueError, match=r"H=30.*W=32.*l=4"):
        small_ae.encode(np.zeros((1, 3, 30, 32), np.float32))


def test_decode_shape_mismatch(small_ae):
    with pytest.raises(ValueError):
        small_ae.decode(np.zeros((1, 5, 4, 4), np.float32))


@settings(max_examples=12, deadline=None)
@given(l=st.sampled_from([2, 4, 8]), c=st.integers(1, 6), k=st.integers(1, 3))
def test_shape_contract_for_all_l(l, c, k):
    ae = Autoencoder.create(AutoencoderSpec(l=l, c=c, channels=(4, 4, 4), depth=0), Rng(l))
    H = W = l * k
    with T.no_grad():
        z = ae.encode(np.zeros((2, 3, H, W), np.float32))
        x = ae.decode(z)
    assert z.shape == (2, c, k, k) and x.shape == (2, 3, H, W)
    assert ae.spec.stages == int(np.log2(l))
    assert len(ae.spec.schedule) == ae.spec.stages


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), scale=st.floats(0.1, 50.0))
def test_decoder_output_in_unit_range(small_ae, seed, scale):
    z = np.random.default_rng(seed).normal(scale=scale, size=(1, 8, 4, 4)).astype(np.float32)
    with T.no_grad():
        x = small_ae.decode(z).data
    assert np.all((x >= 0) & (x <= 1))


def test_decode_gradient_wrt_latent():
    with T.precision("float64"):
        ae = Autoencoder.create(AutoencoderSpec(l=2, c=3, channels=(4,)), Rng(3))
        rng = np.random.default_rng(4)
        target = Tensor(rng.uniform(size=(1, 3, 8, 8)))
        z = Tensor(rng.normal(size=(1, 3, 4, 4)), requires_grad=True)
        fn = lambda xs: T.sum_(T.square(T.sub(ae.decode(xs[0]), target)))  # noqa: E731
        assert check_gradients(fn, [z]) <= 1e-4


def test_parameter_roles_and_copy(small_ae):
    named = small_ae.named_parameters()
    roles = {r for r, _ in named.values()}
    assert roles == {"encoder", "decoder"}
    twin = small_ae.copy()
    assert twin.fingerprint() == small_ae.fingerprint()
    twin.decoder[0].weight.data += 1
    assert twin.fingerprint() != small_ae.fingerprint()
    assert twin.encoder_fingerprint() == small_ae.encoder_fingerprint()


def test_spec_validation():
    with pytest.raises(ValueError):
        AutoencoderSpec(l=3)
    with pytest.raises(ValueError):
        AutoencoderSpec(l=16, channels=(8, 8))


def test_gradients_reach_both_halves(small_ae):
    x = np.random.default_rng(5).uniform(size=(2, 3, 16, 16)).astype(np.float32)
    loss = T.mean(T.square(T.sub(small_ae.decode(small_ae.encode(x)), Tensor(x))))
    T.zero_grad(small_ae.parameters())
    T.backward(loss)
    assert all(p.grad is not None and np.any(p.grad != 0) for p in small_ae.parameters())
    T.zero_grad(small_ae.parameters())
