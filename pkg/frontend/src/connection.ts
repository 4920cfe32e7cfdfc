// WebSocket client with automatic reconnect. Sends go through a latest-wins
// buffer while the socket is down, so the final value of each control still
// arrives after a reconnect; the server then replays its current state.

import { PendingEdits } from './coalesce';
import type { ClientEdit, ServerMessage } from './protocol';
import { encodeEdit, parseServerMessage } from './protocol';

export class ViewerConnection {
  private socket: WebSocket | null = null;
  private pending = new PendingEdits();
  private closed = false;

  constructor(
    private url: string,
    private onMessage: (msg: ServerMessage) => void,
    private onStatus: (connected: boolean) => void = () => {},
    private reconnectDelayMs = 1000,
  ) {}

  open(): void {
    this.closed = false;
    this.connect();
  }

  private connect(): void {
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.onStatus(true);
      for (const edit of this.pending.drain()) {
        socket.send(encodeEdit(edit));
      }
    };
    socket.onmessage = (event) => {
      try {
        this.onMessage(parseServerMessage(String(event.data)));
      } catch (err) {
        console.warn('dropping unparseable server message:', err);
      }
    };
    socket.onclose = () => {
      this.onStatus(false);
      this.socket = null;
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
  }

  send(edit: ClientEdit): void {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(encodeEdit(edit));
    } else {
      this.pending.push(edit);
    }
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
