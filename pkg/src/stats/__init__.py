# 统计内核模块
from .linreg import FitResult, bh_adjust, f_cdf, f_tail, ols_fit

__all__ = ["FitResult", "bh_adjust", "f_cdf", "f_tail", "ols_fit"]
