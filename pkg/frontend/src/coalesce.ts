// Outbound edit shaping: a trailing-edge debouncer for slider scrubbing and
// a latest-wins buffer for when the socket is not yet open. The server also
// coalesces, so neither side ever backs up on intermediate values; the final
// value of every control always goes out.

import type { ClientEdit } from './protocol';
import { editKey } from './protocol';

export class Debouncer {
  private timers = new Map<string, ReturnType<typeof setTimeout>>();

  constructor(
    private send: (edit: ClientEdit) => void,
    private delayMs = 50,
  ) {}

  push(edit: ClientEdit): void {
    const key = editKey(edit);
    const existing = this.timers.get(key);
    if (existing !== undefined) {
      clearTimeout(existing);
    }
    this.timers.set(
      key,
      setTimeout(() => {
        this.timers.delete(key);
        this.send(edit);
      }, this.delayMs),
    );
  }

  flush(): void {
    // used on pointer-up so the final slider value never waits for the timer
    for (const timer of this.timers.values()) {
      clearTimeout(timer);
    }
    this.timers.clear();
  }
}

export class PendingEdits {
  private order: string[] = [];
  private byKey = new Map<string, ClientEdit>();

  push(edit: ClientEdit): void {
    const key = editKey(edit);
    if (!this.byKey.has(key)) {
      this.order.push(key);
    }
    this.byKey.set(key, edit);
  }

  drain(): ClientEdit[] {
    const out = this.order
      .map((key) => this.byKey.get(key))
      .filter((e): e is ClientEdit => e !== undefined);
    this.order = [];
    this.byKey.clear();
    return out;
  }

  get size(): number {
    return this.order.length;
  }
}
