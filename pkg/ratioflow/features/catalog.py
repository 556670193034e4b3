from functools import lru_cache
from typing import Dict, List, Tuple

from ..errors import ModelNotFoundError
from .descriptors import (
    CovariateDescriptor,
    Constant,
    Imb,
    ImbCum,
    LagImb,
    LagImbCum,
    LastSign,
    ModelSpec,
    SignSpreadProduct,
)


LDAY_VALUES = (2, 3, 5, 7, 10, 14, 30, 60)


def _levels(n: int, cumulative: bool) -> List[CovariateDescriptor]:
    make = ImbCum if cumulative else Imb
    return [make(k) for k in range(1, n + 1)]


def _lags(n: int, m_max: int, cumulative: bool) -> List[CovariateDescriptor]:
    make = LagImbCum if cumulative else LagImb
    return [make(k, m) for m in range(1, m_max + 1) for k in range(1, n + 1)]


def _spec(name: str, covariates: List[CovariateDescriptor], days: int = 1) \
        -> ModelSpec:
    return ModelSpec(
        name=name,
        covariates=tuple([Constant()] + covariates),
        recalibration_days=days,
    )


@lru_cache(maxsize=1)
def _build_catalog() -> Tuple[Tuple[ModelSpec, ...], Dict[str, str]]:
    specs: List[ModelSpec] = []
    aliases: Dict[str, str] = {}

    def add_family(fmt: str, n_values, build, sum_variant: bool):
        for n in n_values:
            specs.append(_spec(fmt.format(n=n, s=""), build(n, False)))
            if not sum_variant:
                continue
            sum_name = fmt.format(n=n, s="_sum")
            if n == 1:
                # i_1 and ibar_1 coincide, the _sum model is the same one.
                aliases[sum_name] = fmt.format(n=n, s="")
            else:
                specs.append(_spec(sum_name, build(n, True)))

    add_family("imb{n}{s}", range(1, 11),
               lambda n, c: _levels(n, c), True)
    add_family("imb{n}_la1{s}", range(1, 6),
               lambda n, c: _levels(n, c) + _lags(n, 1, c), True)
    add_family("imb{n}_e_es{s}", range(1, 6),
               lambda n, c: _levels(n, c) + [LastSign(), SignSpreadProduct()],
               True)
    add_family("imb{n}_e_es_la1{s}", range(1, 6),
               lambda n, c: _levels(n, c) + _lags(n, 1, c)
               + [LastSign(), SignSpreadProduct()], True)
    # m = 1 is the imb{n}_e_es_la1 model above.
    for n in (1, 2):
        for m in range(2, 6):
            specs.append(_spec(
                f"imb{n}_e_es_la{m}",
                _levels(n, False) + _lags(n, m, False)
                + [LastSign(), SignSpreadProduct()]
            ))
    for n in (1, 2):
        for days in LDAY_VALUES:
            specs.append(_spec(
                f"imb{n}_e_es_la1_{days}day",
                _levels(n, False) + _lags(n, 1, False)
                + [LastSign(), SignSpreadProduct()],
                days=days,
            ))
    return tuple(specs), aliases


def model_catalog() -> List[ModelSpec]:
    """
    Every model of the catalog, l-day variants included.

    The "_sum" variants at level 1 are folded into their plain
    counterparts, as are the lag-m models at m = 1.

    Returns:
        List[ModelSpec]: 54 single-day specs followed by 16 l-day specs.
    """
    return list(_build_catalog()[0])


def catalog_names(include_lday: bool = True) -> List[str]:
    return [s.name for s in model_catalog() if include_lday or not s.is_lday]


def normalize_name(name: str) -> str:
    """Lower case, no blanks: "imb 2_e_es_la 1" -> "imb2_e_es_la1"."""
    return "".join(name.lower().split())


def get_model(name: str) -> ModelSpec:
    """
    Look a model up by catalog name or alias.

    Raises:
        ModelNotFoundError: If the name is unknown.
    """
    specs, aliases = _build_catalog()
    key = normalize_name(name)
    key = aliases.get(key, key)
    for spec in specs:
        if spec.name == key:
            return spec
    raise ModelNotFoundError(f"Unknown model {name!r}.")


def resolve_models(names: List[str], include_lday: bool = True) \
        -> List[ModelSpec]:
    """
    Expand a list of names where "catalog" stands for the whole catalog.
    Duplicates are dropped, first occurrence wins.
    """
    out: List[ModelSpec] = []
    seen = set()
    for name in names:
        if normalize_name(name) == "catalog":
            batch = [s for s in model_catalog()
                     if include_lday or not s.is_lday]
        else:
            batch = [get_model(name)]
        for spec in batch:
            if spec.name not in seen:
                seen.add(spec.name)
                out.append(spec)
    return out
