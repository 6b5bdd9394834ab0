"""Command line entry points: interactive menu plus subcommands."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .engine import Engine, EngineConfig, Watcher, load_config
from .errors import ConfigError, EngineError
from .extraction import export_records

MENU = (
    "\n=== RAG engine ===\n"
    "1) Chat with the system\n"
    "2) Add a document for processing\n"
    "3) Exit\n"
    "Select an option: "
)


def _print_report(report, out=sys.stdout):
    if report.skipped:
        print(f"already ingested (doc={report.doc_id})", file=out)
        return
    print(
        f"ingested doc={report.doc_id}: {report.chunks} chunks, "
        f"{report.vectors} vectors, record={report.record_id or '-'}",
        file=out,
    )


def _chat_loop(engine: Engine, stdin=sys.stdin, out=sys.stdout):
    print("Chat mode. Empty line returns to the menu.", file=out)
    session_id = None
    for line in stdin:
        question = line.strip()
        if not question:
            return
        try:
            session_id, ans = engine.ask(question, session_id)
        except EngineError as exc:
            print(f"error: {exc}", file=out)
            continue
        print(f"Answer: {ans.text}", file=out)
        if ans.citations:
            print(f"Sources: {', '.join(ans.citations)}", file=out)
        print("You: ", end="", file=out, flush=True)
    return


def run_menu(engine: Engine, stdin=sys.stdin, out=sys.stdout) -> int:
    while True:
        print(MENU, end="", file=out, flush=True)
        line = stdin.readline()
        if not line:
            break
        choice = line.strip()
        if choice == "1":
            print("You: ", end="", file=out, flush=True)
            _chat_loop(engine, stdin, out)
        elif choice == "2":
            print("Path to document: ", end="", file=out, flush=True)
            path = stdin.readline().strip()
            if not path:
                continue
            try:
                _print_report(engine.ingest_document(path), out)
            except EngineError as exc:
                print(f"error: {exc}", file=out)
        elif choice == "3":
            break
        else:
            print(f"unknown option '{choice}'", file=out)
    engine.save_state()
    print("State saved. Bye.", file=out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="engine", description="RAG engine")
    parser.add_argument("--data-dir", dest="data_dir")
    parser.add_argument("--env-file", default=".env")
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("chat", help="interactive chat loop")

    p_ingest = sub.add_parser("ingest", help="ingest one document")
    p_ingest.add_argument("path")

    p_watch = sub.add_parser("watch", help="watch a directory for new documents")
    p_watch.add_argument("--dir", dest="watch_dir")
    p_watch.add_argument("--interval", dest="poll_interval", type=float)

    p_serve = sub.add_parser("serve", help="run the HTTP API")
    p_serve.add_argument("--port", type=int)
    p_serve.add_argument("--host")

    p_export = sub.add_parser("export", help="export extraction records")
    p_export.add_argument("--format", choices=["json", "csv"], default="json")
    p_export.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        k: v for k, v in vars(args).items()
        if k not in ("command", "env_file") and v is not None
    }
    try:
        config = load_config(cli_overrides=overrides, dotenv_path=args.env_file)
        engine = Engine(config)
        engine.load_state()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command is None:
            return run_menu(engine)
        if args.command == "chat":
            print("You: ", end="", flush=True)
            _chat_loop(engine)
            engine.save_state()
            return 0
        if args.command == "ingest":
            report = engine.ingest_document(args.path)
            _print_report(report)
            engine.save_state()
            return 0
        if args.command == "watch":
            watcher = Watcher(engine)
            watcher.start()
            print(f"watching {watcher.watch_dir} every {watcher.poll_interval}s (Ctrl-C to stop)")
            try:
                while True:
                    time.sleep(1)
            except KeyboardInterrupt:
                pass
            finally:
                watcher.stop()
                engine.save_state()
            return 0
        if args.command == "serve":
            from .server import serve_http

            serve_http(engine, host=args.host, port=args.port)
            return 0
        if args.command == "export":
            count = export_records(engine.records, engine.schema, args.format, args.out)
            print(f"wrote {count} records to {args.out}")
            return 0
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
