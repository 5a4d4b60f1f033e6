import pytest

from metasysid.config import (
    EXPERIMENT_NAMES,
    apply_experiment_defaults,
    parse_config,
    serialize_config,
)
from metasysid.errors import ConfigError
from metasysid.model import HarmonicSwitchSampler, IIDUniformSampler


def test_empty_document_gives_standard_defaults():
    cfg = parse_config("")
    assert cfg.meta_alpha == 0.01
    assert cfg.adapt_alpha == 0.01
    assert cfg.sigma_a2 == 0.1
    assert cfg.sigma_w2 == 0.01
    assert (cfg.lo, cfg.hi) == (0.5, 1.0)
    assert (cfg.n, cfg.m) == (1, 1)
    assert cfg.test_blocks == 50
    assert cfg.d == 300
    assert cfg.l == 12 and cfg.m_train == 4
    assert cfg.sampler == "uniform"
    assert cfg.rcond is None and cfg.rho is None
    assert cfg.c_phi is None and cfg.c_z is None
    assert cfg.explicit == frozenset()


def test_values_parse_and_are_marked_explicit():
    cfg = parse_config("[meta]\nalpha = 0.2\nd = 12\n")
    assert cfg.meta_alpha == 0.2
    assert cfg.d == 12
    assert ("meta", "alpha") in cfg.explicit
    assert ("meta", "d") in cfg.explicit
    assert ("model", "sigma_a2") not in cfg.explicit


def test_unknown_section_and_key_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[wibble]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[meta]\nalpa = 0.1\n")


def test_default_section_rejected():
    with pytest.raises(ConfigError, match="DEFAULT"):
        parse_config("[DEFAULT]\nalpha = 0.1\n")


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ("[meta]\nd = zero\n", "d"),
        ("[model]\nsigma_a2 = -1\n", "sigma_a2"),
        ("[meta]\nm_train = 20\n", "m_train"),          # >= l
        ("[model]\nlo = 2\nhi = 1\n", "lo"),
        ("[bounds]\nk = 9\n", "k"),                      # > (l - m_train) / 2
        ("[adapt]\nnorm = manhattan\n", "norm"),
        ("[model]\nsampler = gaussian\n", "sampler"),
        ("[bounds]\ndelta = 1.5\n", "delta"),
        ("[experiment]\nrepetitions = 0\n", "repetitions"),
        ("[model]\nparams = 0.5\n", "params"),           # needs a-b pairs
    ],
)
def test_invalid_values_name_the_key(doc, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert fragment in str(err.value)


def test_sweep_lists_checked_against_split():
    with pytest.raises(ConfigError):
        parse_config("[meta]\nl_list = 2 8\n")  # 2 <= default m_train
    cfg = parse_config("[meta]\nm_train = 1\nl_list = 2 8\n")
    assert cfg.l_list == (2, 8)


def test_harmonic_sampler_needs_scalar_dims():
    with pytest.raises(ConfigError):
        parse_config("[model]\nsampler = harmonic\nn = 2\n")
    cfg = parse_config("[model]\nsampler = harmonic\n")
    sampler = cfg.make_sampler()
    assert isinstance(sampler, HarmonicSwitchSampler)
    assert len(sampler.params) == 2  # the default two-task cycle


def test_make_sampler_uniform_and_auto_rejection():
    cfg = parse_config("[model]\nn = 2\nm = 2\nlo = -0.5\nhi = 0.5\n")
    sampler = cfg.make_sampler()
    assert isinstance(sampler, IIDUniformSampler)
    assert sampler.reject_unstable is None  # auto resolves inside the sampler
    assert sampler.rejects
    on = parse_config("[model]\nreject_unstable = off\nn = 2\nlo = -0.5\nhi = 0.5\n")
    assert on.make_sampler().rejects is False


def test_auto_sentinels_parse_to_none():
    cfg = parse_config("[adapt]\nc_phi = auto\nc_z = 1.5\n[bounds]\nrho = 0.9\n")
    assert cfg.c_phi is None
    assert cfg.c_z == 1.5
    assert cfg.rho == 0.9
    assert parse_config("[meta]\nrcond = 1e-10\n").rcond == 1e-10


def test_serialize_round_trip_exact():
    texts = [
        "",
        "[meta]\nalpha = 0.2\nd = 17\n[model]\nsigma_w2 = 0\n",
        "[experiment]\nname = fig-harmonic\nseed = 9\n",
        "[adapt]\nepsilon_list = 0.0 0.1 0.2\nc_z = auto\n",
        "[model]\nparams = 0.5 0.7 ; 0.8 0.8\nsampler = fixed\n",
    ]
    for text in texts:
        cfg = parse_config(text)
        canonical = serialize_config(cfg)
        again = parse_config(canonical)
        assert again == cfg
        # canonical form is a fixed point
        assert serialize_config(again) == canonical


def test_experiment_names_registry():
    assert "fig-gap-vs-D" in EXPERIMENT_NAMES
    assert "bounds-report" in EXPERIMENT_NAMES
    assert len(EXPERIMENT_NAMES) == len(set(EXPERIMENT_NAMES)) == 9


def test_experiment_defaults_fill_unset_keys():
    cfg = apply_experiment_defaults(parse_config(""), "fig-harmonic")
    assert cfg.name == "fig-harmonic"
    assert cfg.sampler == "harmonic"
    assert cfg.sigma_a2 == 1.0
    assert cfg.sigma_w2 == 0.001
    assert cfg.adapt_alpha == 0.2
    assert cfg.steps == 20
    assert cfg.repetitions == 100


def test_experiment_defaults_never_override_explicit():
    cfg = parse_config("[adapt]\nalpha = 0.07\n[model]\nsigma_a2 = 3.0\n")
    merged = apply_experiment_defaults(cfg, "fig-harmonic")
    assert merged.adapt_alpha == 0.07
    assert merged.sigma_a2 == 3.0
    assert merged.sampler == "harmonic"  # untouched keys still filled


def test_experiment_defaults_validate_name():
    with pytest.raises(ConfigError, match="unknown experiment"):
        apply_experiment_defaults(parse_config(""), "fig-nope")


def test_experiment_name_from_config_body():
    cfg = parse_config("[experiment]\nname = fig-weighting\n")
    merged = apply_experiment_defaults(cfg)
    assert merged.sigma_w2 == 0.0  # the weighting setup is noiseless
    assert merged.name == "fig-weighting"


def test_bounds_report_defaults_pin_the_certificate_instance():
    cfg = apply_experiment_defaults(parse_config(""), "bounds-report")
    assert cfg.sampler == "harmonic"
    assert cfg.d == 6000
    assert cfg.l == 202 and cfg.m_train == 2
    assert cfg.meta_alpha == 0.005
    assert cfg.params == ((0.5, 0.9486832980505138),)
    assert cfg.repetitions == 200


def test_equality_ignores_explicit_marks():
    a = parse_config("[meta]\nalpha = 0.01\n")  # the default, set explicitly
    b = parse_config("")
    assert a == b
    assert a.explicit != b.explicit
