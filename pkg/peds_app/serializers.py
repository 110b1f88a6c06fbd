from rest_framework import serializers

from .choices import ExpGrouping, FactorTag, IntegrationMethod, MapKind, OrderingKind, ProjectorKind
from .exceptions import PedsError, PreconditionError
from .memristors import stationary_point
from .targets import DOUBLE_WELL, AnalyticFactorTerm, MonomialTerm, TargetSystem, scalar_function


def _positive(value, name):
    if value <= 0:
        raise serializers.ValidationError(f'{name} must be positive.')
    return value


class FactorSerializer(serializers.Serializer):
    variable = serializers.IntegerField(min_value=0)
    tag = serializers.ChoiceField(choices=FactorTag.choices)
    args = serializers.ListField(child=serializers.FloatField(), min_length=1)

    def validate(self, attrs):
        try:
            function = scalar_function(attrs['tag'], attrs['args'])
        except PedsError as exc:
            raise serializers.ValidationError({'args': str(exc)})
        return attrs['variable'], function


class TermSerializer(serializers.Serializer):
    """A monomial (``exponents``) or a product of tagged factors (``factors``)."""
    coefficient = serializers.FloatField()
    exponents = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False)
    factors = FactorSerializer(many=True, required=False)
    grouping = serializers.ChoiceField(choices=ExpGrouping.choices, default=ExpGrouping.SPLIT)

    def validate(self, attrs):
        if ('exponents' in attrs) == ('factors' in attrs):
            raise serializers.ValidationError('A term needs exactly one of exponents or factors.')
        try:
            if 'exponents' in attrs:
                return MonomialTerm(attrs['coefficient'], tuple(attrs['exponents']))
            return AnalyticFactorTerm(attrs['coefficient'], tuple(attrs['factors']), attrs['grouping'])
        except PedsError as exc:
            raise serializers.ValidationError(str(exc))


class TargetSerializer(serializers.Serializer):
    equations = serializers.ListField(child=TermSerializer(many=True), min_length=1)
    domain = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, allow_null=True),
        required=False,
    )
    name = serializers.CharField(default='custom target')

    def validate(self, attrs):
        try:
            return TargetSystem(
                len(attrs['equations']),
                tuple(tuple(terms) for terms in attrs['equations']),
                domain=attrs.get('domain'),
                name=attrs['name'],
            )
        except PedsError as exc:
            raise serializers.ValidationError(str(exc))


def parse_target(text):
    """
    TargetSystem from its JSON description.

    The description is either a list of equations or an object with
    ``equations`` and optional ``domain`` and ``name``. Each equation is a
    list of terms, for example::

        [[{"coefficient": 1, "exponents": [1]}, {"coefficient": -1, "exponents": [2]}]]

    describes the logistic equation. Factor terms name their scalar functions
    by tag: ``{"coefficient": 2, "factors": [{"variable": 0, "tag": "log_affine",
    "args": [1, 0.5]}]}``.
    """
    data = serializers.JSONField(binary=True).run_validation(text)
    if isinstance(data, list):
        data = {'equations': data}
    serializer = TargetSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


class ScenarioConfigSerializer(serializers.Serializer):
    """Keys shared by every scenario section."""
    n = serializers.IntegerField(min_value=1, default=50)
    alpha = serializers.FloatField(default=0.1)
    dt = serializers.FloatField(default=0.01)
    steps = serializers.IntegerField(min_value=1, default=20000)
    method = serializers.ChoiceField(choices=IntegrationMethod.choices, default=IntegrationMethod.RK4)
    record_stride = serializers.IntegerField(min_value=1, default=100)
    seed = serializers.IntegerField(min_value=0, default=42)
    sigma = serializers.FloatField(min_value=0.0, default=0.1)
    map_kind = serializers.ChoiceField(choices=MapKind.choices, default=MapKind.STANDARD_NONCOMMUTATIVE)
    ordering = serializers.ChoiceField(
        choices=[OrderingKind.STANDARD, OrderingKind.BALANCED],
        default=OrderingKind.STANDARD,
    )
    full_state = serializers.BooleanField(default=False)
    tolerance = serializers.FloatField(default=1e-3)
    output = serializers.CharField(default='', allow_blank=True)

    def validate_alpha(self, value):
        return _positive(value, 'alpha')

    def validate_dt(self, value):
        return _positive(value, 'dt')

    def validate_tolerance(self, value):
        return _positive(value, 'tolerance')


class QuarticMixin(serializers.Serializer):
    a1 = serializers.FloatField(default=DOUBLE_WELL[0])
    a2 = serializers.FloatField(default=DOUBLE_WELL[1])
    a3 = serializers.FloatField(default=DOUBLE_WELL[2])
    a4 = serializers.FloatField(default=DOUBLE_WELL[3])

    def validate(self, attrs):
        attrs = super().validate(attrs)
        if not any(attrs[key] for key in ('a2', 'a3', 'a4')):
            raise serializers.ValidationError('The potential needs a non-constant derivative.')
        return attrs


class Quartic1dConfigSerializer(QuarticMixin, ScenarioConfigSerializer):
    x0 = serializers.FloatField(default=-0.51)
    ensemble_size = serializers.IntegerField(min_value=1, default=1)
    map_kind = serializers.ChoiceField(choices=MapKind.choices, default=MapKind.STANDARD_COMMUTATIVE)
    full_state = serializers.BooleanField(default=True)


class MapCompareConfigSerializer(QuarticMixin, ScenarioConfigSerializer):
    x0 = serializers.FloatField(default=-0.51)
    map_kind = None
    target = serializers.CharField(default='', allow_blank=True)

    def validate_target(self, value):
        return parse_target(value) if value.strip() else None


class Potential2dConfigSerializer(ScenarioConfigSerializer):
    x0 = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, default=lambda: [1.0, 0.5])
    dt = serializers.FloatField(default=0.1)
    steps = serializers.IntegerField(min_value=1, default=1000)
    method = serializers.ChoiceField(choices=IntegrationMethod.choices, default=IntegrationMethod.EULER)
    record_stride = serializers.IntegerField(min_value=1, default=10)
    seed = serializers.IntegerField(min_value=0, default=7)
    gap_tolerance = serializers.FloatField(default=1e-8)

    def validate_map_kind(self, value):
        if value == MapKind.MIXED_COMMUTATIVE:
            raise serializers.ValidationError('The mixed map is undefined at x = 0, where this scenario converges.')
        return value


class HamiltonianConfigSerializer(QuarticMixin, ScenarioConfigSerializer):
    alpha = None
    mass = serializers.FloatField(default=1.0)
    chi = serializers.FloatField(min_value=0.0, default=2.0)
    alpha_x = serializers.FloatField(default=0.1)
    alpha_p = serializers.FloatField(default=0.1)
    x0 = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, default=lambda: [3.0, 0.0])
    dt = serializers.FloatField(default=0.001)
    method = serializers.ChoiceField(choices=IntegrationMethod.choices, default=IntegrationMethod.EULER)
    seed = serializers.IntegerField(min_value=0, default=11)

    def validate_mass(self, value):
        return _positive(value, 'mass')

    def validate_alpha_x(self, value):
        return _positive(value, 'alpha_x')

    def validate_alpha_p(self, value):
        return _positive(value, 'alpha_p')


class RandomProjectorConfigSerializer(QuarticMixin, ScenarioConfigSerializer):
    a1 = serializers.FloatField(default=9.85)
    a2 = serializers.FloatField(default=-10.0)
    a3 = serializers.FloatField(default=-2.0)
    a4 = serializers.FloatField(default=0.0)
    k = serializers.IntegerField(min_value=1, default=25)
    x0 = serializers.FloatField(default=0.0)
    seed = serializers.IntegerField(min_value=0, default=3)
    tolerance = serializers.FloatField(default=1e-2)
    max_retries = serializers.IntegerField(min_value=1, default=5)
    projector_file = serializers.CharField(default='', allow_blank=True)

    def validate(self, attrs):
        attrs = super().validate(attrs)
        if not attrs['projector_file'] and attrs['k'] > attrs['n']:
            raise serializers.ValidationError({'k': 'k cannot exceed n.'})
        return attrs


class MemristorConfigSerializer(ScenarioConfigSerializer):
    alpha = serializers.FloatField(default=1.0)
    beta = serializers.FloatField(default=1.0)
    chi = serializers.FloatField(default=0.5)
    s = serializers.FloatField(min_value=0.0, default=0.2)
    projector = serializers.ChoiceField(
        choices=[ProjectorKind.UNIFORM_MEAN_FIELD, ProjectorKind.GRAM, ProjectorKind.TRIVIAL],
        default=ProjectorKind.UNIFORM_MEAN_FIELD,
    )
    k = serializers.IntegerField(min_value=1, default=25)
    x0 = serializers.FloatField(default=0.5)
    steps = serializers.IntegerField(min_value=1, default=5000)
    seed = serializers.IntegerField(min_value=0, default=5)
    tolerance = serializers.FloatField(default=1e-4)
    projector_file = serializers.CharField(default='', allow_blank=True)
    map_kind = None
    ordering = None

    def validate_beta(self, value):
        return _positive(value, 'beta')

    def validate_chi(self, value):
        if not 0.0 <= value <= 1.0:
            raise serializers.ValidationError('chi must lie in [0, 1].')
        return value

    def validate_x0(self, value):
        if not 0.0 <= value < 1.0:
            raise serializers.ValidationError('x0 must lie in the device domain [0, 1).')
        return value

    def validate(self, attrs):
        attrs = super().validate(attrs)
        try:
            x_star = stationary_point(attrs['chi'], attrs['s'], attrs['alpha'], attrs['beta'])
        except PreconditionError as exc:
            raise serializers.ValidationError({'s': str(exc)})
        if not 0.0 <= x_star < 1.0:
            raise serializers.ValidationError({'s': f'Stationary point {x_star:.6g} lies outside [0, 1).'})
        if attrs['projector'] == ProjectorKind.GRAM and attrs['k'] > attrs['n']:
            raise serializers.ValidationError({'k': 'k cannot exceed n.'})
        return attrs


class VerifyConfigSerializer(serializers.Serializer):
    alpha = serializers.FloatField(min_value=0.0, default=0.5)
    n = serializers.IntegerField(min_value=2, default=5)
    dt = serializers.FloatField(default=0.01)
    seed = serializers.IntegerField(min_value=0, default=0)
    samples = serializers.IntegerField(min_value=1, default=100)

    def validate_dt(self, value):
        return _positive(value, 'dt')


SCENARIO_SERIALIZERS = {
    'quartic1d': Quartic1dConfigSerializer,
    'map_compare': MapCompareConfigSerializer,
    'potential2d': Potential2dConfigSerializer,
    'hamiltonian': HamiltonianConfigSerializer,
    'random_projector': RandomProjectorConfigSerializer,
    'memristor': MemristorConfigSerializer,
}

SECTION_SERIALIZERS = {**SCENARIO_SERIALIZERS, 'verify': VerifyConfigSerializer}
