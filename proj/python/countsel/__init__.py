"""Count-regression fitting, overdispersion / zero-inflation diagnostics, model
selection policies and the Monte Carlo harness, backed by the C++ core."""

from ._core import (
    AggregateRates,
    CountDataset,
    DomainError,
    Family,
    FitOptions,
    FitResult,
    GridLevels,
    InputError,
    ModelParams,
    Policy,
    PolicyRates,
    ScenarioConfig,
    SelectionTrace,
    Tally,
    TestOutcome,
    VuongOutcome,
    VuongStat,
    WaldForm,
    build_grid,
    dean_lawless,
    deviance_lrt,
    family_token,
    fit,
    fit_null,
    fit_report,
    log_pmf,
    loglik,
    loglik_gradient,
    mc_se,
    parse_family,
    read_dataset_csv,
    results_csv,
    run_scenarios,
    sample,
    select_lowest_aic,
    select_seven_step,
    simulate_dataset,
    vuong,
    vuong_from_logdl,
    wald_test,
)

FAMILIES = (Family.POISSON, Family.NB2, Family.ZIP, Family.ZINB)


def analyze(y, x, alpha=0.05, form=WaldForm.CHISQ):
    """Fits all four families to (y, x) and runs both selection policies."""
    data = CountDataset(list(y), list(x))
    fits = {fam: fit(fam, data) for fam in FAMILIES}
    return {
        "fits": fits,
        "wald": {fam: wald_test(f, alpha, form) for fam, f in fits.items()},
        "dean_lawless": dean_lawless(data, fits[Family.POISSON], alpha),
        "vuong_pois_zip": vuong(fits[Family.POISSON], fits[Family.ZIP], data, alpha),
        "vuong_nb_zinb": vuong(fits[Family.NB2], fits[Family.ZINB], data, alpha),
        "seven_step": select_seven_step(data, alpha, form),
        "lowest_aic": select_lowest_aic(data, alpha, form),
    }


__all__ = [name for name in dir() if not name.startswith("_")]
