"""
Output Management Utility for organizing training runs.

Creates one directory per run holding its checkpoints, training log and reports.
"""

from pathlib import Path
from datetime import datetime
from typing import Optional, Union
import re


class OutputManager:
    """
    Manages the directory of one training or evaluation run.

    Example:
        mgr = OutputManager(base_dir="outputs", run_name="preposition")
        mgr.get_output_path("best.ckpt")
        # Returns: outputs/preposition_20261019/checkpoints/best.ckpt
    """

    def __init__(
        self,
        base_dir: Union[str, Path] = "outputs",
        run_name: Optional[str] = None,
        add_timestamp: bool = True,
        create_subdirs: bool = True,
    ):
        """
        Initialize output manager.

        Args:
            base_dir: Base output directory (default: "outputs")
            run_name: Name for this run (None = use base_dir itself as the run directory)
            add_timestamp: Add date timestamp to the run folder name (default: True)
            create_subdirs: Create "checkpoints" and "reports" subdirectories (default: True)
        """
        self.base_dir = Path(base_dir)
        self.run_name = run_name
        self.add_timestamp = add_timestamp

        self.run_dir = self._create_run_dir()

        self.checkpoints_dir = self.run_dir / "checkpoints" if create_subdirs else self.run_dir
        self.reports_dir = self.run_dir / "reports" if create_subdirs else self.run_dir

        for dir_path in [self.checkpoints_dir, self.reports_dir]:
            dir_path.mkdir(parents=True, exist_ok=True)

    def _create_run_dir(self) -> Path:
        """Create and return the run directory."""
        if self.run_name is None:
            run_path = self.base_dir
        else:
            safe_name = re.sub(r'[^\w\s-]', '', self.run_name).strip().replace(' ', '_') or "run"
            if self.add_timestamp:
                safe_name = f"{safe_name}_{datetime.now().strftime('%Y%m%d')}"
            run_path = self.base_dir / safe_name

        run_path.mkdir(parents=True, exist_ok=True)
        return run_path

    def get_output_path(self, filename: str, subdir: str = "checkpoints") -> Path:
        """
        Get full output path for a file.

        Args:
            filename: Name of the file
            subdir: "checkpoints", "reports", or anything else for the run directory itself
        """
        if subdir == "checkpoints":
            return self.checkpoints_dir / filename
        elif subdir == "reports":
            return self.reports_dir / filename
        else:
            return self.run_dir / filename

    def __str__(self) -> str:
        return str(self.run_dir)

    def __repr__(self) -> str:
        return f"OutputManager(run_dir='{self.run_dir}')"


def create_run_output(run_name: str, base_dir: Union[str, Path] = "outputs") -> OutputManager:
    """
    Convenience function for a dated run directory under ``base_dir``.

    Example:
        output_mgr = create_run_output("ablation")
        csv_path = output_mgr.get_output_path("ablation.csv", subdir="reports")
    """
    return OutputManager(base_dir=base_dir, run_name=run_name)
