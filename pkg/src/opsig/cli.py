"""``opsig`` command-line tool.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 store error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .analytics import class_association, jaccard_similarity, top_similar
from .apitable import (
    ApiTable,
    PermissionMap,
    default_api_table,
    default_permission_map,
    load_api_filter,
    read_api_table,
    read_permission_map,
)
from .errors import OpsigError, StoreError
from .ingest import dump_air, load_app, parse_air_json, write_smali_bundle
from .mutator import KINDS, MutationSpec, mutate, variant_suite
from .signature import Signer, SignatureBundle, bundle_from_json, bundle_to_json
from .store import SignatureStore, parse_label_document
from .zeroday import ZeroDayConfig, detect_zero_day

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_STORE = 0, 1, 2, 3

log = logging.getLogger("opsig")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


@dataclass
class CliConfig:
    table: ApiTable
    pmap: PermissionMap | None
    exclude: frozenset[str]
    store_dir: Path | None
    hash_name: str
    verbosity: int
    json: bool
    jobs: int
    keep_dead: bool = False

    @property
    def signer(self) -> Signer:
        return Signer(self.table, self.exclude, self.hash_name, self.keep_dead)

    def store(self, create: bool = True) -> SignatureStore:
        if self.store_dir is None:
            raise StoreError("this command needs --store DIR")
        return SignatureStore(self.store_dir, create=create)


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--api-table", metavar="PATH", default=d(None), help="API table TSV (default: bundled fixture)")
    p.add_argument("--perm-map", metavar="PATH", default=d(None), help="API -> permission TSV")
    p.add_argument("--api-filter", metavar="PATH", default=d(None), help="methods to exclude from signatures")
    p.add_argument("--store", metavar="DIR", default=d(None), help="signature store directory")
    p.add_argument("--hash", default=d("md5"), help="digest algorithm (default md5)")
    p.add_argument("--json", action="store_true", default=d(False), help="machine-readable output")
    p.add_argument("--jobs", type=int, default=d(os.cpu_count() or 1), help="parallel signing workers")
    p.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opsig", description="Opcode-level signatures for Android apps.")
    parser.add_argument("--version", action="version", version=f"opsig {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        _add_globals(p, suppress=True)
        return p

    p = add("sign", "sign one app (smali bundle dir/tar or AIR json)")
    p.add_argument("bundle")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--keep-dead", action="store_true", help="do not exclude unreachable code")

    p = add("mutate", "write repackaged/obfuscated variants as AIR json")
    p.add_argument("bundle")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--suite", action="store_true", help="the 7-variant suite")
    g.add_argument("--kind", choices=KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="DIR", required=True)

    p = add("similar", "similarity of two apps or signature files")
    p.add_argument("a")
    p.add_argument("b")

    p = add("top-similar", "most similar stored apps")
    p.add_argument("app_id")
    p.add_argument("--p", type=float, default=20.0, help="percent of the store to return")

    p = add("perms", "permission recursion for a stored app")
    p.add_argument("app_id")
    p.add_argument("--class", dest="cls")
    p.add_argument("--method")

    p = add("assoc", "benign/malicious usage of a class signature")
    p.add_argument("digest")

    db = add("db", "signature store maintenance")
    dbsub = db.add_subparsers(dest="db_command", metavar="ACTION", parser_class=_Parser, required=True)
    q = dbsub.add_parser("add", help="sign (if needed) and store apps")
    _add_globals(q, suppress=True)
    q.add_argument("inputs", nargs="+")
    q.add_argument("--label", choices=("benign", "malicious"))
    q.add_argument("--source", default="")
    q = dbsub.add_parser("get", help="print a stored bundle")
    _add_globals(q, suppress=True)
    q.add_argument("app_id")
    q = dbsub.add_parser("freq", help="Lev1 signature frequencies")
    _add_globals(q, suppress=True)
    q.add_argument("--top", type=int, default=0)
    q = dbsub.add_parser("labels", help="import a label file")
    _add_globals(q, suppress=True)
    q.add_argument("file")

    p = add("zeroday", "cluster a corpus and flag suspicious clusters")
    p.add_argument("--corpus", metavar="DIR", help="directory of signature/AIR files (default: the store)")
    p.add_argument("--whitelist", metavar="FILE", help="Lev2 digests to ignore, one per line")
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--f", type=float, default=0.2)
    p.add_argument("--labels", metavar="FILE")
    p.add_argument("--out", metavar="FILE")

    air = add("air", "convert between smali bundles and AIR json")
    asub = air.add_subparsers(dest="air_command", metavar="ACTION", parser_class=_Parser, required=True)
    q = asub.add_parser("import", help="AIR json -> smali bundle directory")
    _add_globals(q, suppress=True)
    q.add_argument("document")
    q.add_argument("--out", metavar="DIR", required=True)
    q = asub.add_parser("export", help="smali bundle -> AIR json")
    _add_globals(q, suppress=True)
    q.add_argument("bundle")
    q.add_argument("--out", metavar="FILE")
    return parser


def _config(args) -> CliConfig:
    table = read_api_table(args.api_table) if args.api_table else default_api_table()
    pmap = read_permission_map(args.perm_map) if args.perm_map else default_permission_map()
    exclude = frozenset()
    if args.api_filter:
        exclude = load_api_filter(Path(args.api_filter).read_text(encoding="utf-8"))
    if args.hash not in hashlib.algorithms_available or args.hash.startswith("shake"):
        raise UsageError(f"unknown hash algorithm {args.hash!r}")
    return CliConfig(
        table=table,
        pmap=pmap,
        exclude=exclude,
        store_dir=Path(args.store) if args.store else None,
        hash_name=args.hash,
        verbosity=args.verbose,
        json=args.json,
        jobs=max(1, args.jobs),
        keep_dead=getattr(args, "keep_dead", False),
    )


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _emit(cfg: CliConfig, doc, text: str) -> None:
    print(_dump(doc) if cfg.json else text)


def _is_sig_doc(doc) -> bool:
    return isinstance(doc, dict) and "lev1" in doc


def _sign_path(cfg: CliConfig, path: str) -> SignatureBundle:
    p = Path(path)
    if p.is_file() and p.suffix == ".json":
        doc = json.loads(p.read_text(encoding="utf-8"))
        if _is_sig_doc(doc):
            return bundle_from_json(doc)
        return cfg.signer.sign(parse_air_json(p.read_bytes(), cfg.table), cfg.pmap)
    return cfg.signer.sign(load_app(p, cfg.table), cfg.pmap)


def _sign_job(args):
    cfg, path = args
    return bundle_to_json(_sign_path(cfg, path))


def sign_many(cfg: CliConfig, paths: Sequence[str]) -> list[SignatureBundle]:
    if cfg.jobs <= 1 or len(paths) < 4:
        return [_sign_path(cfg, p) for p in paths]
    with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(paths))) as pool:
        return [bundle_from_json(d) for d in pool.map(_sign_job, [(cfg, p) for p in paths])]


def _bundle_text(b: SignatureBundle) -> str:
    lines = [f"app_id   {b.app_id}", f"package  {b.package_name}", f"lev1     {b.lev1}"
             + ("  (degenerate)" if b.degenerate else ""), f"classes  {len(b.classes)}  api calls {b.api_count}"]
    for c in b.classes:
        perms = ",".join(sorted(c.permissions))
        lines.append(f"  {c.sig.digest}  {c.sig.api_count:5d}  {c.sig.origin:14s} {c.name}  {perms}")
    return "\n".join(lines)


def cmd_sign(cfg, args) -> int:
    bundle = _sign_path(cfg, args.bundle)
    doc = bundle_to_json(bundle)
    if args.out:
        Path(args.out).write_text(_dump(doc) + "\n", encoding="utf-8")
    if cfg.json or not args.out:
        print(_dump(doc))
    else:
        print(_bundle_text(bundle))
    return EXIT_OK


def cmd_mutate(cfg, args) -> int:
    app = load_app(args.bundle, cfg.table)
    if args.suite:
        variants = variant_suite(app, args.seed, cfg.table)
    else:
        variants = [mutate(app, MutationSpec(args.kind, args.seed), cfg.table)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in variants:
        path = out / f"{v.app_id}.json"
        path.write_text(dump_air(v), encoding="utf-8")
        rows.append({"app_id": v.app_id, "lev1": cfg.signer.sign(v).lev1, "path": str(path)})
    _emit(cfg, rows, "\n".join(f"{r['app_id']}  {r['lev1']}  {r['path']}" for r in rows))
    return EXIT_OK


def _report_text(r) -> str:
    lines = [f"score {r.numerator}/{r.denominator} = {r.score_float:.6f}" + ("  (degenerate)" if r.degenerate else "")]
    lines += [f"  common  {d}" for d in r.common]
    lines += [f"  only_a  {d}" for d in r.only_a]
    lines += [f"  only_b  {d}" for d in r.only_b]
    return "\n".join(lines)


def cmd_similar(cfg, args) -> int:
    a, b = _sign_path(cfg, args.a), _sign_path(cfg, args.b)
    report = jaccard_similarity(a, b)
    doc = {"a": a.app_id, "b": b.app_id, **report.to_json()}
    _emit(cfg, doc, _report_text(report))
    return EXIT_OK


def cmd_top_similar(cfg, args) -> int:
    store = cfg.store(create=False)
    ranked = top_similar(store.get(args.app_id), store.bundles(), args.p)
    rows = [{"app_id": b.app_id, "package": b.package_name, **r.to_json()} for b, r in ranked]
    text = "\n".join(f"{r['app_id']}  {r['ratio']:>11s}  {r['score']:.6f}  {r['package']}" for r in rows)
    _emit(cfg, rows, text)
    return EXIT_OK


def cmd_perms(cfg, args) -> int:
    b = cfg.store(create=False).get(args.app_id)
    doc = {"app_id": b.app_id, "permissions": sorted(b.permissions), "classes": []}
    for c in b.classes:
        if args.cls and c.name != args.cls:
            continue
        methods = [
            {"name": m.name, "descriptor": m.descriptor, "lev3": m.sig.digest, "permissions": sorted(m.permissions)}
            for m in c.methods
            if not args.method or m.name == args.method
        ]
        if args.method and not methods:
            continue
        doc["classes"].append({"name": c.name, "lev2": c.sig.digest,
                               "permissions": sorted(c.permissions), "methods": methods})
    lines = [f"app {b.app_id}: {', '.join(doc['permissions']) or '-'}"]
    for c in doc["classes"]:
        lines.append(f"  {c['name']} [{c['lev2']}]: {', '.join(c['permissions']) or '-'}")
        for m in c["methods"]:
            lines.append(f"    {m['name']}{m['descriptor']} [{m['lev3']}]: {', '.join(m['permissions']) or '-'}")
    _emit(cfg, doc, "\n".join(lines))
    return EXIT_OK


def cmd_assoc(cfg, args) -> int:
    rec = class_association(args.digest, cfg.store(create=False))
    doc = rec.to_json()
    _emit(cfg, doc, f"{rec.class_digest}  api={rec.api_count}  benign={rec.benign_count}  "
                    f"malicious={rec.malicious_count}  unknown={rec.unknown_count}  "
                    f"perms={','.join(sorted(rec.permissions)) or '-'}")
    return EXIT_OK


def cmd_db(cfg, args) -> int:
    store = cfg.store(create=args.db_command == "add")
    if args.db_command == "add":
        added, dups = [], []
        for bundle in sign_many(cfg, args.inputs):
            if bundle.app_id in store:
                dups.append(bundle.app_id)
                continue
            added.append(store.insert(bundle, args.label, args.source))
        _emit(cfg, {"added": added, "duplicates": dups},
              "\n".join([f"added {a}" for a in added] + [f"duplicate {d}" for d in dups]))
        return EXIT_STORE if dups and not added else EXIT_OK
    if args.db_command == "get":
        doc = bundle_to_json(store.get(args.app_id))
        print(_dump(doc))
        return EXIT_OK
    if args.db_command == "freq":
        rows = store.query_lev1_frequency()
        if args.top:
            rows = rows[: args.top]
        _emit(cfg, [{"lev1": d, "count": n} for d, n in rows], "\n".join(f"{n:6d}  {d}" for d, n in rows))
        return EXIT_OK
    applied, unknown = store.import_labels(Path(args.file).read_text(encoding="utf-8"))
    _emit(cfg, {"applied": applied, "unknown_app_ids": unknown},
          f"applied {applied} labels" + (f"; {len(unknown)} unknown app ids" if unknown else ""))
    return EXIT_OK


def _corpus_files(directory: Path) -> list[str]:
    files = []
    for p in sorted(directory.iterdir()):
        if p.suffix == ".json" or p.is_dir() or (p.is_file() and p.suffix == ".tar"):
            files.append(str(p))
    return files


def cmd_zeroday(cfg, args) -> int:
    if args.corpus:
        corpus = sign_many(cfg, _corpus_files(Path(args.corpus)))
        store = None
    else:
        store = cfg.store(create=False)
        corpus = list(store.bundles())
    labels: dict[str, str] = {}
    if store is not None:
        labels.update(store.labels_map())
    if args.labels:
        from .analytics import merge_labels
        for app_id, label, _ in parse_label_document(Path(args.labels).read_text(encoding="utf-8")):
            labels[app_id] = merge_labels([labels.get(app_id, "unknown"), label])
    whitelist = frozenset()
    if args.whitelist:
        whitelist = frozenset(line.strip() for line in Path(args.whitelist).read_text().splitlines()
                              if line.strip() and not line.startswith("#"))
    zcfg = ZeroDayConfig(T=args.T, n=args.n, f=args.f, whitelist=whitelist)
    run = detect_zero_day(corpus, labels, zcfg)
    doc = run.to_json()
    if args.out:
        Path(args.out).write_text(_dump(doc) + "\n", encoding="utf-8")
    sus = run.suspicious()
    lines = [f"{len(corpus)} apps, {len(run.clusters)} clusters, {len(run.merge_log)} merges, "
             f"{len(sus)} suspicious"]
    for v in sus:
        lines.append(f"  suspicious cluster of {len(v.members)} ({v.malicious_count} malicious); "
                     f"common classes: {', '.join(v.common_classes)}")
    _emit(cfg, doc, "\n".join(lines))
    return EXIT_OK


def cmd_air(cfg, args) -> int:
    if args.air_command == "import":
        app = parse_air_json(Path(args.document).read_bytes(), cfg.table)
        out = write_smali_bundle(app, args.out)
        _emit(cfg, {"app_id": app.app_id, "out": str(out)}, f"wrote {out}")
        return EXIT_OK
    text = dump_air(load_app(args.bundle, cfg.table))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "sign": cmd_sign,
    "mutate": cmd_mutate,
    "similar": cmd_similar,
    "top-similar": cmd_top_similar,
    "perms": cmd_perms,
    "assoc": cmd_assoc,
    "db": cmd_db,
    "zeroday": cmd_zeroday,
    "air": cmd_air,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except StoreError as exc:
        print(f"opsig: store error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except (OpsigError, OSError, ValueError, UnicodeDecodeError) as exc:
        print(f"opsig: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
