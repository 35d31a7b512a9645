import math
import sys


def read_doc():
    doc = {}
    for line in sys.stdin.read().splitlines():
        line = line.strip()
        if line:
            k, v = line.split("=", 1)
            doc[k.strip()] = v.strip()
    return doc


def emit(pairs):
    for k, v in pairs:
        print(f"{k}={v}")


def layer_of(d):
    return {k: int(d[k]) for k in
            ("ifmap_h", "ifmap_w", "filter_h", "filter_w", "channels", "num_filters", "stride")}


def config_of(d):
    kb = lambda key: int(round(float(d.get(key, "1024")) * 1024))
    rows = int(d.get("array_rows", "1"))
    cols = int(d.get("array_cols", "1"))
    return {
        "rows": rows,
        "cols": cols,
        "dataflow": d.get("dataflow", "os"),
        "ifmap": kb("ifmap_sram_kb"),
        "filter": kb("filter_sram_kb"),
        "ofmap": kb("ofmap_sram_kb"),
        "bw": float(d.get("dram_bandwidth_words_per_cycle", "1")),
        "ws": int(d.get("word_size_bytes", "1")),
        "row_ports": int(d.get("row_ports", rows)),
        "col_ports": int(d.get("col_ports", cols)),
        "drain_ports": int(d.get("drain_ports", cols)),
    }


def out_hw(l):
    return ((l["ifmap_h"] - l["filter_h"]) // l["stride"] + 1,
            (l["ifmap_w"] - l["filter_w"]) // l["stride"] + 1)


def gemm(l):
    oh, ow = out_hw(l)
    return oh * ow, l["num_filters"], l["filter_h"] * l["filter_w"] * l["channels"]


def plan(sr, sc, t, rows, cols):
    folds = []
    for rf in range(-(-sr // rows)):
        r0 = rf * rows
        for cf in range(-(-sc // cols)):
            c0 = cf * cols
            folds.append({"rf": rf, "cf": cf, "r0": r0, "rows": min(rows, sr - r0),
                          "c0": c0, "cols": min(cols, sc - c0), "t0": 0, "t": t})
    return folds


def ifmap_words(l, r0, rows, t0, t):
    _, ow = out_hw(l)
    c = l["channels"]
    seen = set()
    for p in range(r0, r0 + rows):
        oy, ox = divmod(p, ow)
        for k in range(t0, t0 + t):
            pos, ch = divmod(k, c)
            fy, fx = divmod(pos, l["filter_w"])
            seen.add((oy * l["stride"] + fy, ox * l["stride"] + fx, ch))
    return len(seen)


def footprint(l, f):
    return (ifmap_words(l, f["r0"], f["rows"], f["t0"], f["t"]), f["cols"] * f["t"], f["rows"] * f["cols"])


def fits(words, sram, ws):
    return 2 * words * ws <= sram


class Infeasible(Exception):
    def __init__(self, buffer):
        self.buffer = buffer


def split(l, cfg, f, out):
    fp = footprint(l, f)
    over = None
    for name, words in zip(("ifmap", "filter", "ofmap"), fp):
        if not fits(words, cfg[name], cfg["ws"]):
            over = name
            break
    if over is None:
        out.append(f)
        return
    if over == "ofmap" or f["t"] == 1:
        raise Infeasible(over)
    head = -(-f["t"] // 2)
    split(l, cfg, dict(f, t=head), out)
    split(l, cfg, dict(f, t0=f["t0"] + head, t=f["t"] - head), out)


def capacity_tile(l, cfg):
    sr, sc, t = gemm(l)
    out = []
    for f in plan(sr, sc, t, cfg["rows"], cfg["cols"]):
        split(l, cfg, f, out)
    return out


def traffic(l, cfg, folds):
    sr, sc, t = gemm(l)
    ws = cfg["ws"]
    filter_resident = fits(sc * t, cfg["filter"], ws)
    rep = dict(dram_ifmap=0, dram_filter=0, dram_ofmap=sr * sc, sram_ifmap=0, sram_filter=0, sram_ofmap=0)
    fetches = []
    cur, resident = None, False
    for f in folds:
        fetch = 0
        if f["rf"] != cur:
            cur = f["rf"]
            whole = ifmap_words(l, f["r0"], f["rows"], 0, t)
            resident = fits(whole, cfg["ifmap"], ws)
            if resident:
                fetch += whole
        if not resident:
            fetch += ifmap_words(l, f["r0"], f["rows"], f["t0"], f["t"])
        rep["dram_ifmap"] += fetch
        fw = f["cols"] * f["t"] if (not filter_resident or f["rf"] == 0) else 0
        rep["dram_filter"] += fw
        fetch += fw
        rep["sram_ifmap"] += f["rows"] * f["t"]
        rep["sram_filter"] += f["cols"] * f["t"]
        rep["sram_ofmap"] += f["rows"] * f["cols"]
        fetches.append(fetch)
    return rep, fetches


def fold_cycles(r, c, t, df):
    if df == "os":
        return r + c - 2, t, r
    return 2 * r + c - 2, t, 0


def windows(r, c, t, df):
    if df == "os":
        w = [("west", 0, r + t - 1), ("north", 0, c + t - 1), ("south", r + t - 1, 2 * r + c + t - 2)]
        return w, r + c - 2, r + c + t - 2, 2 * r + c + t - 2
    w = [("north", 0, r), ("west", r, 2 * r + t - 1), ("south", 2 * r - 1, 2 * r + c + t - 2)]
    return w, 2 * r + c - 2, 2 * r + c + t - 2, 2 * r + c + t - 2


def edge_cost(edge, r, c, ports):
    lanes = r if edge == "west" else c
    return -(-lanes // ports[edge])


def budget_cycles(r, c, t, df, ports):
    w, fill_end, stream_end, total = windows(r, c, t, df)
    phases = [0, 0, 0]
    for beat in range(total):
        cost = max([edge_cost(e, r, c, ports) for e, s, x in w if s <= beat < x] + [1])
        phase = 0 if beat < fill_end else (1 if beat < stream_end else 2)
        phases[phase] += cost
    return phases


def ports_of(cfg):
    return {"west": cfg["row_ports"], "north": cfg["col_ports"], "south": cfg["drain_ports"]}


def stalls(fetches, cycles, bw):
    per = []
    for k, words in enumerate(fetches):
        need = math.ceil(words / bw)
        per.append(need if k == 0 else max(0, need - cycles[k - 1]))
    return per

d = read_doc()
l = layer_of(d)
cfg = config_of(d)
sr, sc, t = gemm(l)
for f in plan(sr, sc, t, cfg["rows"], cfg["cols"]):
    i, w, o = footprint(l, f)
    print(f"fold={f['rf']},{f['cf']},{i},{w},{o}")
