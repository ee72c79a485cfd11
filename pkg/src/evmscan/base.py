"""Minimal estimator plumbing.

Implements the get_params/set_params protocol that scikit-learn pipelines
and model-selection utilities rely on, without requiring scikit-learn
itself.  Constructor arguments are the parameters; fitted state uses the
trailing-underscore convention.
"""

from __future__ import annotations

import inspect


class BaseEstimator:
    @classmethod
    def _parameter_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return sorted(
            name
            for name, p in signature.parameters.items()
            if name != "self" and p.kind is p.POSITIONAL_OR_KEYWORD
        )

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._parameter_names()}

    def set_params(self, **params) -> "BaseEstimator":
        valid = set(self._parameter_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters: {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
