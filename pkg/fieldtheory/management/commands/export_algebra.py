# fieldtheory/management/commands/export_algebra.py
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from fieldtheory.errors import AlgebraError
from fieldtheory.services.algebra import build_algebra, dump_algebra, load_algebra


class Command(BaseCommand):
    help = "Write an algebra's structure constants and pairing as a JSON golden file."

    def add_arguments(self, parser):
        parser.add_argument("kind", choices=("abelian", "su2", "so"))
        parser.add_argument("--dim", type=int, default=1, help="n for abelian, d for so(1,d)")
        parser.add_argument("--out", type=str, required=True)

    def handle(self, *args, **opts):
        try:
            spec = build_algebra(opts["kind"], opts["dim"])
        except AlgebraError as exc:
            raise CommandError(str(exc), returncode=2)
        text = dump_algebra(spec)
        # the file must load back to the same algebra
        load_algebra(text)
        path = Path(opts["out"]).expanduser()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.stdout.write(self.style.SUCCESS(f"Wrote {spec.kind} (dimension {spec.dim}) to {path}"))
