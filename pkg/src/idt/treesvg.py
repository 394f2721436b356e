"""Layered top-down SVG rendering of an illuminated tree.

Leaves claim x slots left to right, internal nodes center over their
children, and depth sets the y band. Internal cards show the feature's
visualization thumbnail, its name, the threshold, and per-class flow
percentages on the out-edges (left edge lists the fractions routed left,
right edge the fractions routed right). Leaf cards show a class histogram
and the predicted class. Output is a pure function of its inputs, so two
renders of the same tree are byte-identical.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .illuminate import IlluminatedTree

PALETTE = ("#e05c8a", "#5c7de0", "#5cb573", "#c9a13b", "#9a5ce0", "#5cc9c9")


@dataclass(frozen=True)
class SvgStyle:
    card_w: int = 170
    card_h: int = 150
    leaf_h: int = 110
    hgap: int = 24
    vgap: int = 70
    thumb: int = 64
    font_size: int = 11
    margin: int = 16


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _thumb_data_uri(png_path: Path, size: int) -> str:
    with Image.open(png_path) as im:
        im = im.convert("RGB").resize((size, size), Image.BILINEAR)
        buf = io.BytesIO()
        im.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode()


def _layout(itree: IlluminatedTree, style: SvgStyle):
    tree = itree.tree
    xs: dict[int, float] = {}
    depths: dict[int, int] = {}
    next_slot = [0]

    def place(nid: int, depth: int) -> float:
        node = tree.nodes[nid]
        depths[nid] = depth
        if node.is_leaf:
            x = style.margin + next_slot[0] * (style.card_w + style.hgap) + style.card_w / 2
            next_slot[0] += 1
        else:
            xl = place(node.left, depth + 1)
            xr = place(node.right, depth + 1)
            x = (xl + xr) / 2
        xs[nid] = x
        return x

    place(0, 0)
    return xs, depths, next_slot[0]


def render_tree_svg(itree: IlluminatedTree, asset_root=None, style: SvgStyle = SvgStyle()) -> str:
    """Render the tree to a standalone SVG document string."""
    tree = itree.tree
    xs, depths, n_leaves = _layout(itree, style)
    max_depth = max(depths.values())
    width = 2 * style.margin + n_leaves * (style.card_w + style.hgap) - style.hgap
    height = 2 * style.margin + 30 + (max_depth + 1) * (style.card_h + style.vgap) - style.vgap

    def card_top(nid: int) -> float:
        return style.margin + 30 + depths[nid] * (style.card_h + style.vgap)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{width}" height="{height}" font-family="monospace" font-size="{style.font_size}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]

    def fmt_acc(v) -> str:
        return "n/a" if v is None else f"{v:.3f}"

    m = itree.metrics
    header = (
        f"tree acc train {fmt_acc(m.get('tree_train_acc'))} / test {fmt_acc(m.get('tree_test_acc'))}"
        f"  |  cnn test acc {fmt_acc(m.get('cnn_test_acc'))}"
    )
    if itree.excluded_names:
        header += "  |  excluded: " + ",".join(itree.excluded_names)
    parts.append(f'<text x="{style.margin}" y="{style.margin + 4}" font-size="12">{_esc(header)}</text>')

    # edges first so cards draw over them
    for node in tree.internal_nodes():
        ann = itree.node_annotations[node.id]
        px, py = xs[node.id], card_top(node.id) + style.card_h
        for child, side in ((node.left, 0), (node.right, 1)):
            cx, cy = xs[child], card_top(child)
            parts.append(
                f'<line x1="{px:.1f}" y1="{py:.1f}" x2="{cx:.1f}" y2="{cy:.1f}" '
                f'stroke="#888888" stroke-width="1.5"/>'
            )
            labels = []
            for cls in tree.class_order:
                fr = ann.flow.get(cls)
                if fr is not None:
                    labels.append(f"{cls} {fr[side] * 100:.0f}%")
            lx = px + (cx - px) * 0.5 + (8 if side else -8)
            ly = py + (cy - py) * 0.5
            anchor = "start" if side else "end"
            for li, text in enumerate(labels):
                parts.append(
                    f'<text x="{lx:.1f}" y="{ly + li * (style.font_size + 2):.1f}" '
                    f'text-anchor="{anchor}" fill="#444444">{_esc(text)}</text>'
                )

    total_root = sum(tree.root.histogram) or 1
    for node in tree.nodes:
        x = xs[node.id] - style.card_w / 2
        y = card_top(node.id)
        if not node.is_leaf:
            ann = itree.node_annotations[node.id]
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{style.card_w}" height="{style.card_h}" '
                f'fill="#f7f7f7" stroke="#333333" rx="6"/>'
            )
            tx = xs[node.id] - style.thumb / 2
            if asset_root is not None:
                png = Path(asset_root) / ann.viz_path
                if png.exists():
                    parts.append(
                        f'<image x="{tx:.1f}" y="{y + 8:.1f}" width="{style.thumb}" height="{style.thumb}" '
                        f'xlink:href="{_thumb_data_uri(png, style.thumb)}"/>'
                    )
            if ann.dead:
                parts.append(
                    f'<text x="{xs[node.id]:.1f}" y="{y + 8 + style.thumb / 2:.1f}" '
                    f'text-anchor="middle" fill="#aa2222">dead</text>'
                )
            label = f"{ann.feature_name} &gt; {node.threshold:.4g}"
            parts.append(
                f'<text x="{xs[node.id]:.1f}" y="{y + style.thumb + 24:.1f}" '
                f'text-anchor="middle" font-weight="bold">{label}</text>'
            )
            parts.append(
                f'<text x="{xs[node.id]:.1f}" y="{y + style.thumb + 40:.1f}" '
                f'text-anchor="middle" fill="#555555">n={sum(node.histogram)}</text>'
            )
            parts.append(
                f'<text x="{x + 10:.1f}" y="{y + style.card_h - 10:.1f}" fill="#777777">'
                f"L: &gt; thr&#160;&#160;R: &#8804; thr</text>"
            )
        else:
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{style.card_w}" height="{style.leaf_h}" '
                f'fill="#fcfcf2" stroke="#333333" rx="6"/>'
            )
            hist = node.histogram
            peak = max(hist) or 1
            bar_w = style.card_w - 20
            for k, cls in enumerate(tree.class_order):
                by = y + 10 + k * 18
                bw = bar_w * hist[k] / peak
                color = PALETTE[k % len(PALETTE)]
                parts.append(
                    f'<rect x="{x + 10:.1f}" y="{by:.1f}" width="{bw:.1f}" height="12" fill="{color}"/>'
                )
                parts.append(
                    f'<text x="{x + 12:.1f}" y="{by + 10:.1f}" fill="#222222">{_esc(cls)} {hist[k]}</text>'
                )
            pred = tree.class_order[node.predicted_class]
            share = sum(hist) / total_root
            parts.append(
                f'<text x="{xs[node.id]:.1f}" y="{y + style.leaf_h - 12:.1f}" text-anchor="middle" '
                f'font-weight="bold">&#8594; {_esc(pred)} ({share * 100:.0f}% of samples)</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
