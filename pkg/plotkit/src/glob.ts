/** Tiny glob: `*` within a path segment, `**` for any depth. */

import * as fs from "fs";
import * as path from "path";

function segmentToRegex(segment: string): RegExp {
  const escaped = segment.replace(/[.+^${}()|[\]\\]/g, "\\$&").replace(/\*/g, "[^/]*");
  return new RegExp(`^${escaped}$`);
}

export function expandGlob(pattern: string): string[] {
  const abs = path.resolve(pattern);
  const segments = abs.split(path.sep).filter((s) => s !== "");
  const roots = abs.startsWith(path.sep) ? [path.sep] : ["."];
  let current = roots;
  for (let i = 0; i < segments.length; i++) {
    const seg = segments[i];
    const next: string[] = [];
    for (const base of current) {
      if (seg === "**") {
        const stack = [base];
        while (stack.length) {
          const dir = stack.pop()!;
          next.push(dir);
          let entries: fs.Dirent[] = [];
          try {
            entries = fs.readdirSync(dir, { withFileTypes: true });
          } catch {
            continue;
          }
          for (const e of entries) {
            if (e.isDirectory()) stack.push(path.join(dir, e.name));
          }
        }
      } else if (seg.includes("*")) {
        const rx = segmentToRegex(seg);
        let entries: fs.Dirent[] = [];
        try {
          entries = fs.readdirSync(base, { withFileTypes: true });
        } catch {
          continue;
        }
        for (const e of entries) {
          if (rx.test(e.name)) next.push(path.join(base, e.name));
        }
      } else {
        const candidate = path.join(base, seg);
        if (fs.existsSync(candidate)) next.push(candidate);
      }
    }
    current = [...new Set(next)];
  }
  return current.filter((p) => {
    try {
      return fs.statSync(p).isFile();
    } catch {
      return false;
    }
  }).sort();
}
