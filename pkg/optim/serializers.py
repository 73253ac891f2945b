import json
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from .algorithms import GammaSchedule
from .exceptions import ConfigError
from .harness import ALGORITHMS, AlgorithmSpec, GraphSpec, ProblemSpec, RunConfig


def _setting(key):
    return lambda: settings.OPTIM[key]


def _defaults(serializer_class):
    """validated_data of an omitted nested block, so its own defaults apply."""
    serializer = serializer_class(data={})
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


def _positive(value, label):
    if value <= 0:
        raise serializers.ValidationError(f"{label} must be positive")
    return value


class GraphSpecSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['line', 'cycle', 'complete', 'erdos_renyi'])
    m = serializers.IntegerField(min_value=1)
    p = serializers.FloatField(min_value=0.0, max_value=1.0, required=False, allow_null=True)
    seed = serializers.IntegerField(required=False, allow_null=True)

    def validate(self, attrs):
        if attrs['kind'] == 'erdos_renyi':
            if attrs.get('p') is None:
                raise serializers.ValidationError({'p': "erdos_renyi graphs need an edge probability"})
            if attrs['p'] == 0:
                raise serializers.ValidationError({'p': "edge probability must lie in (0, 1]"})
            if attrs['m'] < 2:
                raise serializers.ValidationError({'m': "erdos_renyi graphs need m >= 2"})
        return attrs


class GossipSpecSerializer(serializers.Serializer):
    c = serializers.FloatField(max_value=0.5, default=_setting('GOSSIP_C'))

    def validate_c(self, value):
        return _positive(value, "c")


class QuadraticProblemSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['quadratic'])
    m = serializers.IntegerField(min_value=1)
    h = serializers.IntegerField(min_value=1, default=110)
    n = serializers.IntegerField(min_value=1, default=100)
    seed = serializers.IntegerField(default=0)

    def get_fields(self):
        fields = super().get_fields()
        # "lambda" is a Python keyword
        fields['lambda'] = serializers.FloatField(min_value=0.0, default=0.0)
        return fields


class LogisticProblemSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['logistic'])
    dataset = serializers.CharField(default=_setting('A3A_PATH'))
    m = serializers.IntegerField(min_value=1)
    h = serializers.IntegerField(min_value=1, default=159)
    seed = serializers.IntegerField(default=0)

    def validate_dataset(self, value):
        if not Path(value).is_file():
            raise serializers.ValidationError(f"dataset file {value} does not exist")
        return value


PROBLEM_SERIALIZERS = {
    'quadratic': QuadraticProblemSerializer,
    'logistic': LogisticProblemSerializer,
}


class GammaSpecSerializer(serializers.Serializer):
    beta1 = serializers.FloatField(min_value=1.0, default=2.0)
    beta2 = serializers.FloatField(default=1.0)
    freeze_after = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    constant = serializers.FloatField(min_value=1.0, required=False, allow_null=True)

    def validate_beta2(self, value):
        return _positive(value, "beta2")


class SafeguardSpecSerializer(serializers.Serializer):
    enabled = serializers.BooleanField(default=False)
    R_tilde = serializers.FloatField(required=False, allow_null=True)

    def validate(self, attrs):
        radius = attrs.get('R_tilde')
        if radius is not None and radius <= 0:
            raise serializers.ValidationError({'R_tilde': "safeguard radius must be positive"})
        if attrs['enabled'] and radius is None:
            raise serializers.ValidationError({'R_tilde': "an enabled safeguard needs R_tilde"})
        return attrs


class AlgorithmSpecSerializer(serializers.Serializer):
    name = serializers.ChoiceField(choices=list(ALGORITHMS), default='adaptive')
    delta = serializers.FloatField(max_value=1.0, default=_setting('DELTA'))
    theta0 = serializers.FloatField(default=_setting('THETA0'))
    d0 = serializers.IntegerField(min_value=1, default=_setting('D0'))
    horizon = serializers.ChoiceField(choices=['adaptive', 'known'], default='adaptive')
    gamma = GammaSpecSerializer(required=False)
    safeguard = SafeguardSpecSerializer(required=False)
    extra_alpha = serializers.FloatField(required=False, allow_null=True)
    extra_alpha_grid = serializers.ListField(child=serializers.FloatField(), required=False)

    def validate_delta(self, value):
        return _positive(value, "delta")

    def validate_theta0(self, value):
        return _positive(value, "theta0")

    def validate_extra_alpha(self, value):
        return value if value is None else _positive(value, "extra_alpha")

    def validate_extra_alpha_grid(self, value):
        if not value:
            raise serializers.ValidationError("alpha grid must not be empty")
        if any(alpha <= 0 for alpha in value):
            raise serializers.ValidationError("alpha values must be positive")
        return value

    def validate(self, attrs):
        attrs.setdefault('gamma', _defaults(GammaSpecSerializer))
        attrs.setdefault('safeguard', _defaults(SafeguardSpecSerializer))
        return attrs


class InitSpecSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['zeros', 'gaussian'], default='zeros')
    scale = serializers.FloatField(default=1.0)

    def validate_scale(self, value):
        return _positive(value, "scale")


class RunConfigSerializer(serializers.Serializer):
    name = serializers.CharField(default='run')
    seed = serializers.IntegerField(default=0)
    graph = GraphSpecSerializer()
    gossip = GossipSpecSerializer(required=False)
    problem = serializers.DictField()
    algorithm = AlgorithmSpecSerializer(required=False)
    init = InitSpecSerializer(required=False)
    criterion = serializers.ChoiceField(choices=['auto', 'distance', 'merit'], default='auto')
    tolerance = serializers.FloatField(default=_setting('TOLERANCE'))
    max_iterations = serializers.IntegerField(min_value=1, default=_setting('MAX_ITERATIONS'))
    max_vector_rounds = serializers.IntegerField(min_value=1, default=_setting('MAX_VECTOR_ROUNDS'))
    stride = serializers.IntegerField(min_value=1, default=1)
    output = serializers.CharField(required=False, allow_null=True)

    def validate_tolerance(self, value):
        return _positive(value, "tolerance")

    def validate_problem(self, value):
        kind = value.get('kind')
        if kind not in PROBLEM_SERIALIZERS:
            raise serializers.ValidationError(f"problem kind must be one of {sorted(PROBLEM_SERIALIZERS)}")
        serializer = PROBLEM_SERIALIZERS[kind](data=value)
        if not serializer.is_valid():
            raise serializers.ValidationError(serializer.errors)
        return serializer.validated_data

    def validate(self, attrs):
        attrs.setdefault('gossip', _defaults(GossipSpecSerializer))
        attrs.setdefault('algorithm', _defaults(AlgorithmSpecSerializer))
        attrs.setdefault('init', _defaults(InitSpecSerializer))
        if attrs['graph']['m'] != attrs['problem']['m']:
            raise serializers.ValidationError(
                {'problem': f"problem has m={attrs['problem']['m']}, graph has m={attrs['graph']['m']}"}
            )
        return attrs

    def create(self, validated_data):
        graph = validated_data['graph']
        problem = validated_data['problem']
        algorithm = validated_data['algorithm']
        gamma = algorithm['gamma']
        safeguard = algorithm['safeguard']
        seed = validated_data['seed']

        return RunConfig(
            name=validated_data['name'],
            seed=seed,
            graph=GraphSpec(
                kind=graph['kind'],
                m=graph['m'],
                p=graph.get('p'),
                seed=seed if graph.get('seed') is None else graph['seed'],
            ),
            c=validated_data['gossip']['c'],
            problem=ProblemSpec(
                kind=problem['kind'],
                m=problem['m'],
                h=problem['h'],
                n=problem.get('n', 0),
                lam=problem.get('lambda', 0.0),
                dataset=problem.get('dataset'),
                seed=problem['seed'],
            ),
            algorithm=AlgorithmSpec(
                name=algorithm['name'],
                delta=algorithm['delta'],
                theta0=algorithm['theta0'],
                d0=algorithm['d0'],
                horizon=algorithm['horizon'],
                gamma=GammaSchedule(
                    beta1=gamma['beta1'],
                    beta2=gamma['beta2'],
                    freeze_after=gamma.get('freeze_after'),
                    constant=gamma.get('constant'),
                ),
                safeguard=safeguard['enabled'],
                safeguard_radius=safeguard.get('R_tilde'),
                extra_alpha=algorithm.get('extra_alpha'),
                extra_alpha_grid=tuple(algorithm.get('extra_alpha_grid', ())),
            ),
            init_kind=validated_data['init']['kind'],
            init_scale=validated_data['init']['scale'],
            criterion=validated_data['criterion'],
            tolerance=validated_data['tolerance'],
            max_iterations=validated_data['max_iterations'],
            max_vector_rounds=validated_data['max_vector_rounds'],
            stride=validated_data['stride'],
            output=validated_data.get('output'),
        )


def parse_run_config(data) -> RunConfig:
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError(serializer.errors)
    return serializer.save()


def load_run_config(path) -> RunConfig:
    """Read and validate a JSON run config."""
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ConfigError({'config': [f"config file {path} does not exist"]})
    except json.JSONDecodeError as e:
        raise ConfigError({'config': [f"{path} is not valid JSON: {e}"]})
    if not isinstance(data, dict):
        raise ConfigError({'config': ["top level of a run config must be an object"]})
    return parse_run_config(data)
