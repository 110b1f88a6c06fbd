from django.db import models


class ProjectorKind(models.TextChoices):
    UNIFORM_MEAN_FIELD = 'uniform_mean_field', 'Uniform mean field'
    TRIVIAL = 'trivial', 'Trivial'
    GRAM = 'gram', 'Gram'
    CUSTOM = 'custom', 'Custom'


class OrderingKind(models.TextChoices):
    STANDARD = 'standard', 'Standard'
    BALANCED = 'balanced', 'Balanced'
    WEIGHTED = 'weighted', 'Weighted'


class ExpGrouping(models.TextChoices):
    SPLIT = 'split', 'One exponential per variable'
    JOINT = 'joint', 'Single exponential of the summed exponents'


class FactorTag(models.TextChoices):
    POWER = 'power', 'x^p'
    EXP_POLY = 'exp_poly', 'exp of a polynomial'
    RECIPROCAL_AFFINE = 'reciprocal_affine', '1 / (c0 + c1 x)'
    LOG_AFFINE = 'log_affine', 'log(c0 + c1 x)'
    CUSTOM_SERIES = 'custom_series', 'Truncated power series'


class MapKind(models.TextChoices):
    STANDARD_COMMUTATIVE = 'standard_commutative', 'Standard commutative'
    MIXED_COMMUTATIVE = 'mixed_commutative', 'Mixed commutative'
    STANDARD_NONCOMMUTATIVE = 'standard_noncommutative', 'Standard non-commutative'


class DecayKind(models.TextChoices):
    STANDARD = 'standard', 'Standard'
    GEN_A = 'gen_a', 'Generalization A'
    GEN_B = 'gen_b', 'Generalization B'


class IntegrationMethod(models.TextChoices):
    EULER = 'euler', 'Explicit Euler'
    RK4 = 'rk4', 'Runge-Kutta 4'


class FixedPointSource(models.TextChoices):
    NEWTON_ON_TARGET = 'newton_on_target', 'Newton on target'
    NEWTON_ON_EMBEDDING = 'newton_on_embedding', 'Newton on the extended system'
    TRAJECTORY_LIMIT = 'trajectory_limit', 'Trajectory limit'


class Classification(models.TextChoices):
    STABLE = 'stable', 'Stable'
    SADDLE = 'saddle', 'Saddle'
    UNSTABLE = 'unstable', 'Unstable'
    MARGINAL = 'marginal', 'Marginal'


class PropertyStatus(models.TextChoices):
    PASS = 'PASS', 'Pass'
    FAIL = 'FAIL', 'Fail'
    SKIP = 'SKIP', 'Skipped'
