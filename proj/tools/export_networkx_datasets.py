#!/usr/bin/env python3
"""Export the benchmark graphs bundled with networkx into modkit's text formats.

Writes <out>/karate.edges, <out>/karate.labels and <out>/lesmis.edges.
Node tokens are the networkx node names; Les Miserables edge weights are dropped.
"""
import argparse
import pathlib

import networkx as nx


def write_edges(graph, path, header):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {header}\n")
        for u, v in graph.edges():
            f.write(f"{str(u).replace(' ', '_')} {str(v).replace(' ', '_')}\n")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out", nargs="?", default="data")
    out = pathlib.Path(parser.parse_args().out)
    out.mkdir(parents=True, exist_ok=True)

    karate = nx.karate_club_graph()
    write_edges(karate, out / "karate.edges", "Zachary karate club (networkx.karate_club_graph)")
    with open(out / "karate.labels", "w", encoding="utf-8") as f:
        f.write("node,club\n")
        for node, club in karate.nodes(data="club"):
            f.write(f"{node},{club.replace(' ', '_')}\n")

    lesmis = nx.les_miserables_graph()
    write_edges(lesmis, out / "lesmis.edges", "Les Miserables co-appearance (networkx.les_miserables_graph, unweighted)")


if __name__ == "__main__":
    main()
