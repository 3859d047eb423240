"""Graph Plotting Functions
"""
from __future__ import annotations
import os
import sys
try:
    import plotly.express as px
    import plotly.graph_objs as go
except ImportError:
    pass

import pandas as pd

from ._constants import Constants as const
from ._instances import RoutingInstance
from ._mdp import Solution


def _require_plotly() -> None:
    if 'plotly.express' not in sys.modules:
        raise ImportError('plotly.express is required for charts. Please pip install plotly-express')


def plot_routes(inst:RoutingInstance, solution:Solution, chart_layout:dict|None=None) -> go.Figure:
    """Plot the nodes of an instance and one closed polyline per route.

    Args:
        inst (RoutingInstance): Problem data
        solution (Solution): Solution on `inst`
        chart_layout (dict | None, optional): Layout properties to update. Defaults to None.

    Raises:
        ImportError: If `plotly.express` has not been installed.

    Returns:
        go.Figure: Route figure
    """
    _require_plotly()
    coords = inst.coordinates
    rows = []
    for number, route in enumerate(solution.routes, start=1):
        for position, node in enumerate([const.DEPOT] + route + [const.DEPOT]):
            rows.append({'route': f'route {number}', 'order': position, 'node': node,
                         'x': coords[node, 0], 'y': coords[node, 1]})
    df = pd.DataFrame(rows, columns=['route', 'order', 'node', 'x', 'y'])
    fig = px.line(df, x='x', y='y', color='route', markers=True, hover_data=['node', 'order'])
    fig.add_trace(go.Scatter(x=[coords[const.DEPOT, 0]], y=[coords[const.DEPOT, 1]], mode='markers', name='depot',
                             marker={'symbol': 'square', 'size': 12, 'color': 'black'}))
    fig.update_layout({'title': f'{inst.name}: distance {solution.total_distance:,.2f}', 'yaxis_scaleanchor': 'x'})
    if chart_layout:
        fig.update_layout(chart_layout)
    return fig


def plot_line_chart(df:pd.DataFrame, x:str, y:list[str], chart_layout:dict|None=None) -> go.Figure:
    """Plot Dataframe columns as lines against one column (modulation curves, training metrics).

    Args:
        df (pd.DataFrame): Data to plot
        x (str): X_Axis Column Name
        y (list[str]): Y_Axis Column Names
        chart_layout (dict | None, optional): Layout properties to update. Defaults to None.

    Raises:
        ImportError: If `plotly.express` has not been installed.

    Returns:
        go.Figure: Plotted Data Figure
    """
    _require_plotly()
    fig = px.line(df, x=x, y=y, markers=True)
    if chart_layout:
        fig.update_layout(chart_layout)
    return fig


def plot_grouped_bar_chart(df:pd.DataFrame, x:str, y:list[str], chart_layout:dict|None=None) -> go.Figure:
    """Plot Dataframe columns as grouped bars (feature weights per feasible-set bucket).

    Raises:
        ImportError: If `plotly.express` has not been installed.
    """
    _require_plotly()
    fig = px.bar(df, x=x, y=y, barmode='group')
    if chart_layout:
        fig.update_layout(chart_layout)
    return fig


def export_figure(fig:go.Figure, export_path:str|os.PathLike) -> None:
    """Write a figure to disk; the format follows the extension (`.svg` needs `kaleido`, `.html` does not)."""
    if str(export_path).lower().endswith('.html'):
        fig.write_html(export_path)
    else:
        fig.write_image(export_path)
