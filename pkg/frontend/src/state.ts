// Client-side store: the latest model and state message, plus change
// notifications. Deliberately dumb; all solving happens server-side.

import type { ModelMessage, ServerMessage, StateMessage } from './protocol';

export interface StoreListeners {
  onModel?: (model: ModelMessage) => void;
  onState?: (state: StateMessage) => void;
  onError?: (detail: string) => void;
}

export class ViewerStore {
  model: ModelMessage | null = null;
  state: StateMessage | null = null;
  statesReceived = 0;
  errorsReceived = 0;

  constructor(private listeners: StoreListeners = {}) {}

  apply(message: ServerMessage): void {
    switch (message.type) {
      case 'model':
        this.model = message;
        this.listeners.onModel?.(message);
        break;
      case 'state':
        this.state = message;
        this.statesReceived += 1;
        this.listeners.onState?.(message);
        break;
      case 'error':
        this.errorsReceived += 1;
        this.listeners.onError?.(message.detail);
        break;
    }
  }

  weight(name: string): number | undefined {
    return this.state?.weights[name];
  }
}
