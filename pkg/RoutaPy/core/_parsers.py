"""Instance readers and writers.

Solomon/Homberger text, TSPLIB `EUC_2D`, TSPLIB tours and the native JSON document.
"""
from __future__ import annotations
import json
import logging
import math
import os
import re

from ._constants import Constants as const
from ._exceptions import InstanceParseError, UnsupportedFormatError
from ._instances import CustomerRecord, DistanceRule, RoutingInstance, TaskKind

logger = logging.getLogger(__name__)

_NUMBER = re.compile(r'^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$')


def _numbers(fields:list[str], line_number:int) -> list[float]:
    values = []
    for item in fields:
        if not _NUMBER.match(item):
            raise InstanceParseError(f"non-numeric field '{item}'", line_number)
        values.append(float(item))
    return values


def parse_solomon(text:str, distance_rule:DistanceRule|str=DistanceRule.EXACT) -> RoutingInstance:
    """Parse a Solomon/Homberger CVRPTW document.

    Args:
        text (str): Document text. Row `0` of the customer section is the depot.
        distance_rule (DistanceRule | str, optional): `Exact`, or `Truncated1dp` to match published
            best-known costs. Defaults to `Exact`.

    Raises:
        InstanceParseError: Malformed header, non-numeric field, missing depot row or no customers

    Returns:
        RoutingInstance: CVRPTW instance with `T_max` equal to the depot due date
    """
    lines = text.splitlines()
    name = None
    capacity = None
    section = None
    rows: list[tuple[int, list[float]]] = []
    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        upper = line.upper()
        if name is None:
            name = line
            continue
        if upper.startswith('VEHICLE'):
            section = 'vehicle'
            continue
        if upper.startswith('CUSTOMER') and not upper.startswith('CUST NO'):
            if capacity is None:
                raise InstanceParseError('customer section before vehicle capacity', line_number)
            section = 'customer'
            continue
        if section == 'vehicle':
            if upper.startswith('NUMBER'):
                continue
            values = _numbers(line.split(), line_number)
            if len(values) != 2:
                raise InstanceParseError(f'expected vehicle count and capacity, got {len(values)} field(s)', line_number)
            capacity = values[1]
            section = 'vehicle_done'
            continue
        if section == 'customer':
            if upper.startswith('CUST'):
                continue
            values = _numbers(line.split(), line_number)
            if len(values) != 7:
                raise InstanceParseError(f'expected 7 customer fields, got {len(values)}', line_number)
            rows.append((line_number, values))
            continue
        raise InstanceParseError(f"unexpected content '{line}'", line_number)

    if capacity is None:
        raise InstanceParseError('missing VEHICLE section with count and capacity')
    if not rows:
        raise InstanceParseError('missing customer section')
    depot_line, depot = rows[0]
    if int(depot[0]) != 0:
        raise InstanceParseError('first customer row must be the depot (id 0)', depot_line)
    horizon = depot[5]
    customers = []
    for expected_id, (line_number, values) in enumerate(rows[1:], start=1):
        if int(values[0]) != expected_id:
            raise InstanceParseError(f'expected customer id {expected_id}, got {values[0]:g}', line_number)
        customers.append(CustomerRecord((values[1], values[2]), values[3], values[4], values[5], values[6]))
    if not customers:
        raise InstanceParseError('instance has a depot row but no customers', depot_line)
    return RoutingInstance(TaskKind.CVRPTW, (depot[1], depot[2]), tuple(customers), capacity=capacity,
                           horizon_Tmax=horizon, name=name, distance_rule=DistanceRule(distance_rule))


def _tsplib_header(lines:list[str]) -> tuple[dict[str, str], int]:
    header = {}
    for index, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        key = line.split(':', 1)[0].strip().upper() if ':' in line else line.upper()
        if key.endswith('_SECTION') or key == 'EOF':
            return header, index
        if ':' not in line:
            raise InstanceParseError(f"expected 'KEY : VALUE', got '{line}'", index + 1)
        header[key] = line.split(':', 1)[1].strip()
    return header, len(lines)


def parse_tsplib(text:str) -> RoutingInstance:
    """Parse a TSPLIB `EUC_2D` TSP document.

    Args:
        text (str): Document text

    Raises:
        UnsupportedFormatError: Edge weight type other than `EUC_2D` or problem type other than `TSP`
        InstanceParseError: Missing `NODE_COORD_SECTION`, bad rows or dimension mismatch

    Returns:
        RoutingInstance: TSP instance, first TSPLIB node as start node `0`, distances rounded (nint)
    """
    lines = text.splitlines()
    header, index = _tsplib_header(lines)
    weight_type = header.get('EDGE_WEIGHT_TYPE', '').upper()
    if weight_type != 'EUC_2D':
        raise UnsupportedFormatError(f"unsupported format: EDGE_WEIGHT_TYPE '{weight_type or 'missing'}', only EUC_2D is read")
    problem_type = header.get('TYPE', 'TSP').upper()
    if problem_type != 'TSP':
        raise UnsupportedFormatError(f"unsupported format: TYPE '{problem_type}', only TSP is read")
    if index >= len(lines) or not lines[index].strip().upper().startswith('NODE_COORD_SECTION'):
        raise InstanceParseError('missing NODE_COORD_SECTION', index + 1 if index < len(lines) else None)

    coords = []
    for line_number, raw in enumerate(lines[index + 1:], start=index + 2):
        line = raw.strip()
        if not line:
            continue
        if line.upper() == 'EOF' or line.upper().endswith('_SECTION'):
            break
        values = _numbers(line.split(), line_number)
        if len(values) != 3:
            raise InstanceParseError(f'expected node id and two coordinates, got {len(values)} field(s)', line_number)
        coords.append((values[1], values[2]))
    if 'DIMENSION' in header and int(float(header['DIMENSION'])) != len(coords):
        raise InstanceParseError(f"DIMENSION {header['DIMENSION']} does not match {len(coords)} coordinate rows")
    if len(coords) < 2:
        raise InstanceParseError('TSP instance needs at least two nodes')
    customers = tuple(CustomerRecord(xy) for xy in coords[1:])
    return RoutingInstance(TaskKind.TSP, coords[0], customers, name=header.get('NAME', 'tsplib'),
                           distance_rule=DistanceRule.EUC2D_ROUNDED)


def parse_tsplib_tour(text:str) -> list[int]:
    """Read a TSPLIB `TOUR_SECTION` as 0-based node ids.

    Args:
        text (str): `.tour` document text

    Raises:
        InstanceParseError: Missing `TOUR_SECTION` or non-numeric entries

    Returns:
        list[int]: Node ids in visiting order, without the closing return
    """
    lines = text.splitlines()
    _, index = _tsplib_header(lines)
    if index >= len(lines) or not lines[index].strip().upper().startswith('TOUR_SECTION'):
        raise InstanceParseError('missing TOUR_SECTION')
    tour = []
    for line_number, raw in enumerate(lines[index + 1:], start=index + 2):
        for item in raw.split():
            if item.upper() == 'EOF':
                return tour
            value = int(_numbers([item], line_number)[0])
            if value == -1:
                return tour
            tour.append(value - 1)
    return tour


def _none_if_inf(value:float|None):
    if value is None or math.isinf(value):
        return None
    return value


def instance_to_dict(inst:RoutingInstance) -> dict:
    """Native document fields of an instance."""
    return {
        'task': inst.task.value,
        'name': inst.name,
        'depot': list(inst.depot),
        'customers': [
            {
                'position': list(c.position),
                'demand': c.demand,
                'window_open_e': c.window_open_e,
                'window_close_l': _none_if_inf(c.window_close_l),
                'service_time_s': c.service_time_s,
            } for c in inst.customers
        ],
        'capacity': inst.capacity,
        'horizon': inst.horizon_Tmax,
        'distance_rule': inst.distance_rule.value,
        'time_coef': inst.time_coef,
        'spatial_scale': inst.spatial_scale_S,
    }


def dump_native(inst:RoutingInstance, indent:int|None=None) -> str:
    """Serialize an instance as one native JSON document.

    Args:
        inst (RoutingInstance): Instance to write
        indent (int | None, optional): JSON indentation. Defaults to None (compact).

    Returns:
        str: JSON text
    """
    return json.dumps(instance_to_dict(inst), indent=indent)


def instance_from_dict(data:dict) -> RoutingInstance:
    """Build an instance from native document fields.

    Raises:
        InstanceParseError: Missing or malformed fields
    """
    try:
        customers = tuple(
            CustomerRecord(
                tuple(c['position']),
                float(c.get('demand', 0.0)),
                float(c.get('window_open_e', 0.0)),
                math.inf if c.get('window_close_l') is None else float(c['window_close_l']),
                float(c.get('service_time_s', 0.0)),
            ) for c in data['customers']
        )
        return RoutingInstance(
            TaskKind(data['task']),
            tuple(data['depot']),
            customers,
            capacity=data.get('capacity'),
            horizon_Tmax=data.get('horizon'),
            spatial_scale_S=data.get('spatial_scale'),
            name=data.get('name', 'instance'),
            distance_rule=DistanceRule(data.get('distance_rule', const.EXACT)),
            time_coef=float(data.get('time_coef', 1.0)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise InstanceParseError(f'malformed native instance: {err!r}') from err


def parse_native(text:str) -> RoutingInstance:
    """Parse the native JSON instance document.

    Raises:
        InstanceParseError: Invalid JSON or missing fields
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise InstanceParseError(f'invalid JSON: {err.msg}', err.lineno) from err
    return instance_from_dict(data)


def parse_instance(text:str) -> RoutingInstance:
    """Sniff the document format and parse it.

    Args:
        text (str): Native JSON, TSPLIB or Solomon text

    Returns:
        RoutingInstance: Parsed instance
    """
    stripped = text.lstrip()
    if stripped.startswith('{'):
        return parse_native(text)
    upper = text.upper()
    if 'NODE_COORD_SECTION' in upper or 'EDGE_WEIGHT_TYPE' in upper:
        return parse_tsplib(text)
    return parse_solomon(text)


def load_instance(path:str|os.PathLike, encoding:str='utf-8') -> RoutingInstance:
    """Read an instance file of any supported format.

    Args:
        path (str | os.PathLike): File path
        encoding (str, optional): File encoding. Defaults to 'utf-8'.

    Returns:
        RoutingInstance: Parsed instance
    """
    with open(path, encoding=encoding, mode='r') as file:
        inst = parse_instance(file.read())
    logger.debug('loaded %r from %s', inst, path)
    return inst


def save_instance(inst:RoutingInstance, path:str|os.PathLike) -> None:
    """Write an instance as a native JSON document."""
    with open(path, encoding='utf-8', mode='w') as file:
        file.write(dump_native(inst, indent=1))
