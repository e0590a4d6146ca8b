"""Regenerates the hand-built input fixtures. Outputs are committed; rerun
only when a fixture's definition changes. Golden files produced by the C++
implementation are written by the unit tests under FORGE_REGEN_GOLDEN=1."""

import json
import random
import unicodedata
from pathlib import Path

HERE = Path(__file__).parent


def dump(name, rows):
    with open(HERE / name, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(r if isinstance(r, str) else json.dumps(r, ensure_ascii=False))
            f.write("\n")


def nfc_cases():
    raw = [
        "Cafe\u0301", "e\u0301cole", "A\u030a", "\u212b", "n\u0303o",
        "\u1e9b\u0323", "o\u0308\u0304", "A\u0328\u0301", "u\u0308ber", "\u1100\u1161",
        "\uac00", "\u1100\u1161\u11a8", "\u304b\u3099", "\u30cf\u309a", "\u00c5",
        "re\u0301sume\u0301", "e\u0323\u0302", "\u2126", "n\u0303", "s\u0323\u0307",
    ]
    return [{"raw": r, "nfc": unicodedata.normalize("NFC", r)} for r in raw]


def clicks_100():
    rng = random.Random(100)
    words = ["flu", "shot", "city", "hospital", "taxi", "ride", "bank", "loan", "pizza", "menu"]
    rows = []
    for i in range(100):
        if i == 16:
            rows.append('{"query": "broken", "item_id": ')
        elif i == 62:
            rows.append({"query": "bad count", "item_id": "app3", "clicks": -1})
        else:
            q = " ".join(rng.sample(words, rng.randint(1, 3)))
            rows.append({"query": q, "item_id": f"app{rng.randint(0, 9)}", "clicks": rng.randint(0, 20)})
    return rows


def catalog_50():
    rng = random.Random(50)
    names = ["title", "keywords", "category", "description", "brand", "region"]
    rows = []
    for i in range(50):
        picked = rng.sample(names, rng.randint(1, len(names)))
        row = {"item_id": f"item-{i:02d}"}
        for n in picked:
            row[n] = f"{n} value {i}"
        rows.append(row)
    return rows


def triples_16():
    rows = [{"query": f"q{i}", "item_id": f"a{i % 4}", "label": 1} for i in range(10)]
    rows += [{"query": f"n{i}", "item_id": f"a{i % 4}", "label": "0"} for i in range(6)]
    random.Random(16).shuffle(rows)
    return rows


def icp_world():
    """30 items and a 200-record click log whose queries share words with
    the clicked items often enough for the similarity screen to matter."""
    rng = random.Random(200)
    pools = [
        ["clinic", "doctor", "vaccine", "checkup", "dental", "nurse"],
        ["taxi", "ride", "airport", "driver", "fare", "route"],
        ["pizza", "delivery", "menu", "burger", "noodle", "order"],
        ["bank", "loan", "credit", "savings", "account", "transfer"],
        ["movie", "ticket", "cinema", "concert", "seat", "show"],
    ]
    items = []
    for i in range(30):
        pool = pools[i % len(pools)]
        title = " ".join(rng.sample(pool, 2))
        kw = ",".join(rng.sample(pool, 3))
        items.append({"item_id": f"svc-{i:02d}", "title": title, "keywords": kw,
                      "category": f"cat{i % len(pools)}",
                      "description": " ".join(rng.sample(pool, 4))})
    clicks = []
    for _ in range(200):
        item = rng.choice(items)
        pool = pools[int(item["category"][3:])]
        if rng.random() < 0.2:
            pool = rng.choice(pools)
        q = " ".join(rng.sample(pool, rng.randint(1, 3)))
        clicks.append({"query": q, "item_id": item["item_id"], "clicks": rng.randint(0, 12)})
    return items, clicks


def zh_items_20():
    titles = [
        "东方医院挂号", "人民医院", "挂号服务", "医院预约挂号", "儿童医院",
        "出租车", "机场大巴", "外卖点餐", "银行贷款", "电影票",
        "在线挂号平台", "口腔医院", "社区医院挂号", "体检中心", "药店",
        "火车票", "酒店预订", "医生咨询", "专家门诊挂号", "中医院",
    ]
    return [{"item_id": f"zh-{i:02d}", "title": t, "keywords": t[:2]} for i, t in enumerate(titles)]


def pairs_1000(items):
    rng = random.Random(1000)
    words = ["clinic", "doctor", "taxi", "pizza", "bank", "movie", "ticket", "loan", "ride", "menu"]
    rows = []
    for _ in range(1000):
        q = " ".join(rng.sample(words, rng.randint(1, 3)))
        rows.append({"query": q, "item_id": rng.choice(items)["item_id"]})
    return rows


def replay_500(items):
    """Lookups with a per-line `cached` flag; the snapshot is built from the
    cached lines, so the hit count must equal the number of flagged lines."""
    rng = random.Random(500)
    words = ["clinic", "doctor", "taxi", "pizza", "bank", "movie"]
    distinct = []
    seen = set()
    while len(distinct) < 120:
        q = " ".join(rng.sample(words, rng.randint(1, 2)))
        it = rng.choice(items)["item_id"]
        if (q, it) not in seen:
            seen.add((q, it))
            distinct.append((q, it))
    cached = set(rng.sample(range(len(distinct)), 70))
    rows = []
    for _ in range(500):
        k = rng.randrange(len(distinct))
        q, it = distinct[k]
        rows.append({"query": q, "item_id": it, "cached": k in cached})
    return rows


if __name__ == "__main__":
    dump("nfc_cases.jsonl", nfc_cases())
    dump("clicks_100.jsonl", clicks_100())
    dump("catalog_50.jsonl", catalog_50())
    dump("triples_16.jsonl", triples_16())
    items, clicks = icp_world()
    dump("icp_items.jsonl", items)
    dump("icp_clicks_200.jsonl", clicks)
    dump("zh_items_20.jsonl", zh_items_20())
    dump("pairs_1000.jsonl", pairs_1000(items))
    dump("replay_500.jsonl", replay_500(items))
