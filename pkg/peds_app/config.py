"""
Scenario configuration files.

A config file holds one INI section per scenario plus ``[verify]``. Values
are read through python-decouple, so an environment variable with the same
name as a key overrides the file. The serializers in ``serializers.py``
supply defaults and validation.
"""
import logging
from pathlib import Path

from decouple import Config, Csv, RepositoryEmpty, RepositoryIni
from django.conf import settings
from rest_framework import serializers

from .serializers import SECTION_SERIALIZERS

logger = logging.getLogger(__name__)


class SectionRepository(RepositoryIni):
    """RepositoryIni bound to a single section of the file."""

    def __init__(self, source, section, encoding='utf-8'):
        super().__init__(source, encoding)
        self.SECTION = section


def _cast_for(field):
    if isinstance(field, serializers.ListField):
        return Csv(cast=float)
    if isinstance(field, serializers.BooleanField):
        return bool
    return str


def _config_path(path):
    path = path or getattr(settings, 'PEDS_CONFIG_FILE', '')
    return str(path) if path else None


def load_section(section, path=None, overrides=None):
    """Validated settings for ``section``: defaults < file or environment < overrides."""
    serializer_class = SECTION_SERIALIZERS.get(section)
    if serializer_class is None:
        raise serializers.ValidationError({'scenario': f'Unknown scenario {section!r}.'})
    fields = serializer_class().fields

    path = _config_path(path)
    if path and not Path(path).is_file():
        raise serializers.ValidationError({'config': f'Config file {path} does not exist.'})
    repository = SectionRepository(path, section) if path else RepositoryEmpty()
    source = Config(repository)

    data = {}
    for key, field in fields.items():
        if key in repository:
            data[key] = source(key, cast=_cast_for(field))

    for key, value in (overrides or {}).items():
        if key not in fields:
            raise serializers.ValidationError({key: f'Unknown key for [{section}].'})
        if isinstance(value, str) and isinstance(fields[key], serializers.ListField):
            value = Csv(cast=float)(value)
        data[key] = value

    serializer = serializer_class(data=data)
    serializer.is_valid(raise_exception=True)
    logger.debug('Loaded [%s] from %s with %d override(s)', section, path or 'defaults', len(overrides or {}))
    return dict(serializer.validated_data)


def parse_overrides(pairs):
    """Turn repeated ``key=value`` strings into a dict."""
    overrides = {}
    for pair in pairs or ():
        key, sep, value = pair.partition('=')
        if not sep or not key.strip():
            raise serializers.ValidationError({'set': f'Expected key=value, got {pair!r}.'})
        overrides[key.strip()] = value.strip()
    return overrides


def _format_default(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ','.join(str(v) for v in value)
    return str(value)


def dump_config():
    lines = []
    for section, serializer_class in SECTION_SERIALIZERS.items():
        lines.append(f'[{section}]')
        for key, field in serializer_class().fields.items():
            lines.append(f'{key} = {_format_default(field.get_default())}')
        lines.append('')
    return '\n'.join(lines)
