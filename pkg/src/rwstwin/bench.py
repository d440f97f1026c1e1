"""Loopback refresh-rate benchmark: run a twin against a controller for a
fixed duration and summarize per-thread refresh periods, excluding the
warm-up window after connect.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .emulator import Emulator, EmulatorConfig
from .twin import TwinClient, WindowStats, mean_period_ms
from .wire import DigestCredentials


@dataclass
class BenchResult:
    duration_s: float
    windows: dict[str, list[WindowStats]]  # warm-up excluded
    warmup_windows: dict[str, list[WindowStats]]

    def mean_period_ms(self, thread: str) -> float:
        return mean_period_ms(self.windows.get(thread, []))

    def max_period_ms(self, thread: str) -> float:
        ws = self.windows.get(thread, [])
        return max((w.max_period_ms for w in ws), default=float("nan"))

    def table(self) -> str:
        lines = [f"{'thread':<8} {'windows':>8} {'mean ms':>9} "
                 f"{'ewma ms':>9} {'max ms':>9}"]
        for name, ws in sorted(self.windows.items()):
            if not ws:
                lines.append(f"{name:<8} {0:>8} {'-':>9} {'-':>9} {'-':>9}")
                continue
            lines.append(
                f"{name:<8} {len(ws):>8} {self.mean_period_ms(name):>9.2f} "
                f"{ws[-1].ewma_period_ms:>9.2f} {self.max_period_ms(name):>9.2f}")
        return "\n".join(lines)


def run_refresh_bench(controller_url: str | None = None,
                      duration_s: float = 60.0,
                      camera_delay_ms: float = 0.0,
                      run_cycle: bool = False,
                      creds: DigestCredentials | None = None) -> BenchResult:
    """Run the benchmark. Without a controller URL, a private emulator is
    started on a loopback port for the duration. `run_cycle` starts the
    stacking program so camera load shows up in the telemetry.
    """
    emulator = None
    if controller_url is None:
        emulator = Emulator(EmulatorConfig(port=0,
                                           camera_delay_ms=camera_delay_ms)).start()
        controller_url = emulator.url
        if run_cycle:
            emulator.execution_action("start")

    twin = TwinClient(controller_url, creds=creds).start()
    try:
        time.sleep(duration_s)
        windows = twin.refresh_stats(include_warmup=False)
        all_windows = twin.refresh_stats(include_warmup=True)
    finally:
        twin.stop()
        if emulator is not None:
            emulator.stop()
    warmups = {name: [w for w in ws if w.warmup]
               for name, ws in all_windows.items()}
    return BenchResult(duration_s=duration_s, windows=windows,
                       warmup_windows=warmups)
