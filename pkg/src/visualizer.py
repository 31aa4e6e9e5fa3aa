"""
A2U Lab - Terminal Visualizer
Rich tables and panels for metrics, parameter counts, gradient checks and kernel statistics
"""
from typing import Any, Iterable, Optional, Sequence

from rich.align import Align
from rich.box import ROUNDED, SIMPLE
from rich.console import Console
from rich.panel import Panel
from rich.rule import Rule
from rich.table import Table
from rich.text import Text


# ═══════════════════════════════════════════════════════════════════════════════
# COLOR PALETTE
# ═══════════════════════════════════════════════════════════════════════════════

GRADIENT = {
    "cyan": "#00D9FF",
    "teal": "#00C9B7",
    "mint": "#00E5A0",
    "coral": "#FF6B6B",
}

COLORS = {
    "primary": "#00D9FF",       # Bright cyan
    "secondary": "#FF6B6B",     # Coral
    "accent": "#00E5A0",        # Mint green
    "success": "#00E676",       # Green
    "warning": "#FFD93D",       # Gold
    "error": "#FF5252",         # Red
    "muted": "#6B7280",         # Gray
    "dim": "#4B5563",           # Dark gray
    "text": "#E5E7EB",          # Light gray
}

LAB_LOGO = """
 █████╗ ██████╗ ██╗   ██╗
██╔══██╗╚════██╗██║   ██║
███████║ █████╔╝██║   ██║
██╔══██║██╔═══╝ ██║   ██║
██║  ██║███████╗╚██████╔╝
╚═╝  ╚═╝╚══════╝ ╚═════╝
"""

LAB_TEXT = "A F F I N I T Y - A W A R E   U P S A M P L I N G"


def gradient_text(text: str, colors: list[str]) -> Text:
    """Apply gradient colors line by line."""
    result = Text()
    if not text or not colors:
        return Text(text)

    lines = text.split('\n')
    num_colors = len(colors)

    for i, line in enumerate(lines):
        color_idx = int((i / max(len(lines) - 1, 1)) * (num_colors - 1))
        color = colors[min(color_idx, num_colors - 1)]
        result.append(line + '\n', style=f"bold {color}")

    return result


def _status(ok: bool) -> Text:
    return Text("✓ pass", style=COLORS["success"]) if ok else Text("✗ fail", style=f"bold {COLORS['error']}")


class LabVisualizer:
    """
    Terminal presentation for the CLI.

    Writes to stderr by default so stdout stays free for CSV rows.
    """

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console(stderr=True)

    def print_banner(self):
        logo_text = gradient_text(LAB_LOGO.strip(), [GRADIENT["cyan"], GRADIENT["teal"], GRADIENT["mint"]])
        content = Text()
        content.append_text(logo_text)
        content.append(LAB_TEXT, style=f"bold {GRADIENT['coral']}")
        self.console.print()
        self.console.print(Align.center(content))
        self.console.print()

    def print_separator(self, style: str = None):
        self.console.print(Rule(style=style or COLORS["dim"]))

    def print_metrics(self, report: Any, title: str = "TEST METRICS"):
        """Display a MetricReport."""
        table = Table(show_header=False, box=None, padding=(0, 2), collapse_padding=True)
        table.add_column("Metric", style=COLORS["text"])
        table.add_column("Value", justify="right", style=f"bold {COLORS['primary']}")
        table.add_row("PSNR (dB)", f"{report.psnr:.2f}")
        table.add_row("SSIM", f"{report.ssim:.4f}")
        table.add_row("MSE (root)", f"{report.mse:.4f}")
        table.add_row("MAE", f"{report.mae:.4f}")
        table.add_row(Text("Images", style=COLORS["muted"]), Text(f"{report.count:,}", style=COLORS["muted"]))
        self.console.print(Panel(
            table,
            title=f"[{COLORS['primary']}]{title}[/]",
            title_align="left",
            border_style=COLORS["primary"],
            box=ROUNDED,
            padding=(1, 2),
        ))

    def print_history(self, history: Sequence[Any]):
        """Per-epoch loss and (when evaluated) test PSNR/SSIM."""
        table = Table(box=SIMPLE, header_style=f"bold {COLORS['primary']}")
        table.add_column("Epoch", justify="right")
        table.add_column("LR", justify="right", style=COLORS["muted"])
        table.add_column("Loss", justify="right")
        table.add_column("PSNR", justify="right", style=COLORS["accent"])
        table.add_column("SSIM", justify="right", style=COLORS["accent"])
        for record in history:
            test = record.test
            table.add_row(
                str(record.epoch),
                f"{record.lr:g}",
                f"{record.loss:.5f}",
                f"{test.psnr:.2f}" if test else "-",
                f"{test.ssim:.4f}" if test else "-",
            )
        self.console.print(table)

    def print_param_counts(self, rows: Iterable[dict[str, Any]], channels: int):
        """Closed-form vs instantiated parameter counts, one row per variant."""
        table = Table(
            title=f"A2U parameter counts (C={channels})",
            box=ROUNDED,
            header_style=f"bold {COLORS['primary']}",
            border_style=COLORS["dim"],
        )
        table.add_column("Variant", style=COLORS["text"])
        table.add_column("Formula", justify="right")
        table.add_column("Instantiated", justify="right")
        table.add_column("", justify="center")
        for row in rows:
            table.add_row(row["variant"], f"{row['formula']:,}", f"{row['instantiated']:,}", _status(row["formula"] == row["instantiated"]))
        self.console.print(table)

    def print_gradcheck(self, results: Iterable[tuple[str, float]], tolerance: float):
        table = Table(
            title=f"Gradient check (tolerance {tolerance:g})",
            box=ROUNDED,
            header_style=f"bold {COLORS['primary']}",
            border_style=COLORS["dim"],
        )
        table.add_column("Case", style=COLORS["text"])
        table.add_column("Worst rel. error", justify="right")
        table.add_column("", justify="center")
        for name, err in results:
            table.add_row(name, f"{err:.2e}", _status(err <= tolerance))
        self.console.print(table)

    def print_kernel_stats(self, stats: dict[str, dict[str, Any]]):
        table = Table(
            title="Kernel maps",
            box=ROUNDED,
            header_style=f"bold {COLORS['primary']}",
            border_style=COLORS["dim"],
        )
        for column in ("Stage", "Dir", "s", "r", "Min", "Max", "Mean spread", "Max spread"):
            table.add_column(column, justify="left" if column in ("Stage", "Dir") else "right")
        for stage, s in stats.items():
            table.add_row(
                stage,
                s["direction"],
                str(s["s"]),
                str(s["r"]),
                f"{s['min']:.4f}",
                f"{s['max']:.4f}",
                f"{s['mean_spread']:.4f}",
                f"{s['max_spread']:.4f}",
            )
        self.console.print(table)

    def print_comparison(self, results: Sequence[Any]):
        """Final test metrics per down/up pairing."""
        table = Table(
            title="Reconstruction comparison",
            box=ROUNDED,
            header_style=f"bold {COLORS['primary']}",
            border_style=COLORS["dim"],
        )
        table.add_column("Architecture", style=COLORS["text"])
        for column in ("PSNR", "SSIM", "MAE", "MSE", "Params"):
            table.add_column(column, justify="right")
        best = max((r.report.psnr for r in results if r.report), default=None)
        for r in results:
            rep = r.report
            psnr = Text(f"{rep.psnr:.2f}", style=f"bold {COLORS['success']}" if rep.psnr == best else "") if rep else Text("-")
            table.add_row(
                r.label,
                psnr,
                f"{rep.ssim:.4f}" if rep else "-",
                f"{rep.mae:.4f}" if rep else "-",
                f"{rep.mse:.4f}" if rep else "-",
                f"{r.params:,}",
            )
        self.console.print(table)

    def print_error(self, error: str):
        self.console.print(Panel(
            Text(error, style=COLORS["error"]),
            title=f"[{COLORS['error']}]✗ ERROR[/]",
            title_align="left",
            border_style=COLORS["error"],
            box=ROUNDED,
            padding=(1, 2),
        ))

    def print_success(self, message: str):
        self.console.print(Panel(
            Text(message, style=COLORS["success"]),
            title=f"[{COLORS['success']}]✓ SUCCESS[/]",
            title_align="left",
            border_style=COLORS["success"],
            box=ROUNDED,
            padding=(1, 2),
        ))
